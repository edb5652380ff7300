use chrono::{Datelike, NaiveDate};

use super::{Granularity, TemporalReference};
use crate::error::{Error, Result};

const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

/// Sentinel determination date for timeless claims.
pub fn timeless_sentinel() -> NaiveDate {
    NaiveDate::from_ymd_opt(1900, 1, 1).expect("valid sentinel")
}

fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        2 => 28,
        _ => unreachable!("month out of range"),
    }
}

/// Last calendar day of the period containing `date` at `granularity`.
pub fn period_end(date: NaiveDate, granularity: Granularity) -> NaiveDate {
    let (y, m) = (date.year(), date.month());
    let ymd = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).expect("valid period end");
    match granularity {
        Granularity::Day | Granularity::Timeless => date,
        Granularity::Month => ymd(y, m, days_in_month(y, m)),
        Granularity::Quarter => {
            let end_month = m.div_ceil(3) * 3;
            ymd(y, end_month, days_in_month(y, end_month))
        }
        Granularity::Year => ymd(y, 12, 31),
    }
}

fn month_from_name(word: &str) -> Option<u32> {
    let w = word.trim_end_matches(['.', ',']).to_ascii_lowercase();
    if w.len() < 3 {
        return None;
    }
    MONTHS
        .iter()
        .position(|m| *m == w || (w.len() == 3 && m.starts_with(&w)) || (w == "sept" && *m == "september"))
        .map(|i| i as u32 + 1)
}

fn year(token: &str) -> Option<i32> {
    let t = token.trim_end_matches([',', '.']);
    (t.len() == 4 && t.bytes().all(|b| b.is_ascii_digit()))
        .then(|| t.parse().ok())
        .flatten()
}

fn day(token: &str) -> Option<u32> {
    let t = token
        .trim_end_matches([',', '.'])
        .trim_end_matches("st")
        .trim_end_matches("nd")
        .trim_end_matches("rd")
        .trim_end_matches("th");
    (1..=2).contains(&t.len()).then(|| t.parse().ok()).flatten()
}

fn quarter(token: &str) -> Option<u32> {
    let t = token.trim_end_matches([',', '.']).to_ascii_uppercase();
    let n = t.strip_prefix('Q')?;
    match n.parse::<u32>() {
        Ok(q @ 1..=4) => Some(q),
        _ => None,
    }
}

fn reference(raw: &str, date: NaiveDate, granularity: Granularity) -> TemporalReference {
    TemporalReference {
        raw_text: raw.to_string(),
        resolved_date: period_end(date, granularity),
        granularity,
    }
}

fn ymd(y: i32, m: u32, d: u32) -> Option<NaiveDate> {
    NaiveDate::from_ymd_opt(y, m, d)
}

/// Resolves a time expression to the latest calendar day consistent with it.
///
/// Recognized forms: `timeless`, `YYYY`, `YYYY-MM`, `YYYY-MM-DD`, `Q<n> YYYY`
/// (also `YYYY Q<n>`, `Q<n>-YYYY`), `<Month> YYYY`, `<Month> D, YYYY`,
/// `D <Month> YYYY` and season spans `YYYY-YY`.
pub fn parse_temporal_reference(raw: &str) -> Result<TemporalReference> {
    let text = raw.trim();
    let fail = || Error::UnparseableTemporalReference(raw.to_string());
    if text.is_empty() {
        return Err(fail());
    }
    if text.eq_ignore_ascii_case("timeless") {
        return Ok(TemporalReference {
            raw_text: raw.to_string(),
            resolved_date: timeless_sentinel(),
            granularity: Granularity::Timeless,
        });
    }

    if let Some(y) = year(text) {
        let d = ymd(y, 1, 1).ok_or_else(fail)?;
        return Ok(reference(raw, d, Granularity::Year));
    }

    // ISO forms and season spans share the dash layout.
    let dash: Vec<&str> = text.split('-').collect();
    if dash.iter().all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit())) {
        match dash.as_slice() {
            [y, m, d] if y.len() == 4 && m.len() == 2 && d.len() == 2 => {
                let date = ymd(y.parse().map_err(|_| fail())?, m.parse().map_err(|_| fail())?, d.parse().map_err(|_| fail())?)
                    .ok_or_else(fail)?;
                return Ok(reference(raw, date, Granularity::Day));
            }
            [y, m] if y.len() == 4 && m.len() == 2 => {
                let y: i32 = y.parse().map_err(|_| fail())?;
                let m: u32 = m.parse().map_err(|_| fail())?;
                if let Some(date) = ymd(y, m, 1) {
                    return Ok(reference(raw, date, Granularity::Month));
                }
                // "2018-19": a span ending in the following year.
                if m == (y as u32 + 1) % 100 {
                    let date = ymd(y + 1, 1, 1).ok_or_else(fail)?;
                    return Ok(reference(raw, date, Granularity::Year));
                }
                return Err(fail());
            }
            _ => return Err(fail()),
        }
    }

    let tokens: Vec<&str> = text
        .split(|c: char| c.is_whitespace() || c == '-' || c == '/')
        .filter(|t| !t.is_empty())
        .collect();
    match tokens.as_slice() {
        [a, b] => {
            if let (Some(q), Some(y)) = (quarter(a), year(b)) {
                let date = ymd(y, q * 3, 1).ok_or_else(fail)?;
                return Ok(reference(raw, date, Granularity::Quarter));
            }
            if let (Some(y), Some(q)) = (year(a), quarter(b)) {
                let date = ymd(y, q * 3, 1).ok_or_else(fail)?;
                return Ok(reference(raw, date, Granularity::Quarter));
            }
            if let (Some(m), Some(y)) = (month_from_name(a), year(b)) {
                let date = ymd(y, m, 1).ok_or_else(fail)?;
                return Ok(reference(raw, date, Granularity::Month));
            }
            Err(fail())
        }
        [a, b, c] => {
            if let (Some(m), Some(d), Some(y)) = (month_from_name(a), day(b), year(c)) {
                let date = ymd(y, m, d).ok_or_else(fail)?;
                return Ok(reference(raw, date, Granularity::Day));
            }
            if let (Some(d), Some(m), Some(y)) = (day(a), month_from_name(b), year(c)) {
                let date = ymd(y, m, d).ok_or_else(fail)?;
                return Ok(reference(raw, date, Granularity::Day));
            }
            Err(fail())
        }
        _ => Err(fail()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn strict_interpretation_table() {
        let r = parse_temporal_reference("2023").unwrap();
        assert_eq!((r.resolved_date, r.granularity), (d("2023-12-31"), Granularity::Year));
        let r = parse_temporal_reference("Q3 2023").unwrap();
        assert_eq!((r.resolved_date, r.granularity), (d("2023-09-30"), Granularity::Quarter));
        let r = parse_temporal_reference("March 2023").unwrap();
        assert_eq!((r.resolved_date, r.granularity), (d("2023-03-31"), Granularity::Month));
        let r = parse_temporal_reference("2019-04-15").unwrap();
        assert_eq!((r.resolved_date, r.granularity), (d("2019-04-15"), Granularity::Day));
    }

    #[test]
    fn leap_years_and_iso_month() {
        assert_eq!(parse_temporal_reference("2024-02").unwrap().resolved_date, d("2024-02-29"));
        assert_eq!(parse_temporal_reference("Feb 1900").unwrap().resolved_date, d("1900-02-28"));
        assert_eq!(parse_temporal_reference("February 2000").unwrap().resolved_date, d("2000-02-29"));
    }

    #[test]
    fn other_accepted_forms() {
        assert_eq!(parse_temporal_reference("2023 Q1").unwrap().resolved_date, d("2023-03-31"));
        assert_eq!(parse_temporal_reference("q2-2021").unwrap().resolved_date, d("2021-06-30"));
        assert_eq!(parse_temporal_reference("Sept. 2019").unwrap().resolved_date, d("2019-09-30"));
        assert_eq!(parse_temporal_reference("July 6, 2019").unwrap().resolved_date, d("2019-07-06"));
        assert_eq!(parse_temporal_reference("6 July 2019").unwrap().resolved_date, d("2019-07-06"));
        let season = parse_temporal_reference("2018-19").unwrap();
        assert_eq!((season.resolved_date, season.granularity), (d("2019-12-31"), Granularity::Year));
        let t = parse_temporal_reference("Timeless").unwrap();
        assert!(t.is_timeless());
        assert_eq!(t.resolved_date, timeless_sentinel());
    }

    #[test]
    fn unparseable_carries_raw_text() {
        for raw in ["", "the late nineties", "Q5 2023", "2023-13-01", "2023-02-30", "Smarch 2020"] {
            match parse_temporal_reference(raw) {
                Err(Error::UnparseableTemporalReference(r)) => assert_eq!(r, raw),
                other => panic!("{raw:?} -> {other:?}"),
            }
        }
    }

    #[test]
    fn idempotent_on_iso_output() {
        for raw in ["2023", "Q3 2023", "March 2023", "2019-04-15", "2020-02"] {
            let first = parse_temporal_reference(raw).unwrap().resolved_date;
            let again = parse_temporal_reference(&first.to_string()).unwrap().resolved_date;
            assert_eq!(first, again);
        }
    }
}

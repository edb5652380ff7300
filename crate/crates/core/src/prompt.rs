//! Prompt template assets and `{variable}` interpolation.

pub const TEMPORAL_CONSTRAINT: &str = include_str!("../prompts/temporal_constraint.txt");
pub const SUPERFORECAST_SYSTEM: &str = include_str!("../prompts/superforecast_system.txt");
pub const SUPERFORECAST_USER: &str = include_str!("../prompts/superforecast_user.txt");
pub const GENERATOR_SYSTEM: &str = include_str!("../prompts/generator_system.txt");
pub const GENERATOR_USER: &str = include_str!("../prompts/generator_user.txt");
pub const REGENERATOR_SYSTEM: &str = include_str!("../prompts/regenerator_system.txt");
pub const REGENERATOR_USER: &str = include_str!("../prompts/regenerator_user.txt");
pub const AGGREGATOR_SYSTEM: &str = include_str!("../prompts/aggregator_system.txt");
pub const AGGREGATOR_USER: &str = include_str!("../prompts/aggregator_user.txt");
pub const EXTRACTION_SYSTEM: &str = include_str!("../prompts/extraction_system.txt");
pub const EXTRACTION_USER: &str = include_str!("../prompts/extraction_user.txt");
pub const SHAPLEY_SINGLE_SYSTEM: &str = include_str!("../prompts/shapley_single_system.txt");
pub const SHAPLEY_SINGLE_USER: &str = include_str!("../prompts/shapley_single_user.txt");
pub const SHAPLEY_BATCH_SYSTEM: &str = include_str!("../prompts/shapley_batch_system.txt");
pub const SHAPLEY_BATCH_USER: &str = include_str!("../prompts/shapley_batch_user.txt");
pub const QUERY_GENERATION_SYSTEM: &str = include_str!("../prompts/query_generation_system.txt");
pub const QUERY_GENERATION_USER: &str = include_str!("../prompts/query_generation_user.txt");
pub const DATE_EXTRACTION_SYSTEM: &str = include_str!("../prompts/date_extraction_system.txt");
pub const DATE_EXTRACTION_USER: &str = include_str!("../prompts/date_extraction_user.txt");
pub const FAITHFULNESS_SYSTEM: &str = include_str!("../prompts/faithfulness_system.txt");
pub const FAITHFULNESS_USER: &str = include_str!("../prompts/faithfulness_user.txt");

/// Substitutes `{name}` slots in a single left-to-right pass.
///
/// Only names present in `vars` are replaced, so literal JSON braces in a
/// template survive, and substituted values are never rescanned.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let hit = close.and_then(|close| {
            let name = &after[..close];
            let is_ident =
                !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !is_ident {
                return None;
            }
            vars.iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Names of `{slot}`s in `template` that look like template variables.
pub fn slots(template: &str) -> Vec<&str> {
    let mut found = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        if let Some(close) = after.find('}') {
            let name = &after[..close];
            if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                found.push(name);
            }
        }
        rest = after;
    }
    found
}

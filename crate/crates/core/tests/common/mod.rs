#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use leakaudit::agents::TaskInstance;
use leakaudit::backends::{FixtureCorpus, LanguageModel, LmRequest, LmResponse};
use leakaudit::harness::{load_dataset, MockWorldLm};
use leakaudit::shapley::{CharacteristicFunction, Coalition};
use leakaudit::{Result, TaskType};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn datasets() -> Vec<PathBuf> {
    ["legal.jsonl", "salary.jsonl", "stock.jsonl"].iter().map(|f| fixtures().join(f)).collect()
}

pub fn instance(id: &str) -> TaskInstance {
    datasets()
        .iter()
        .flat_map(|p| load_dataset(p).unwrap())
        .find(|i| i.instance_id == id)
        .unwrap_or_else(|| panic!("no fixture instance {id}"))
}

pub fn mock_lm() -> MockWorldLm {
    MockWorldLm::load(&fixtures().join("mock_world.json")).unwrap()
}

pub fn corpus() -> Arc<FixtureCorpus> {
    Arc::new(FixtureCorpus::load(&fixtures().join("corpus.jsonl")).unwrap())
}

/// Passes requests through and keeps a copy of each.
pub struct Recording<L> {
    pub inner: L,
    pub requests: Mutex<Vec<LmRequest>>,
}

impl<L> Recording<L> {
    pub fn new(inner: L) -> Self {
        Recording { inner, requests: Mutex::new(Vec::new()) }
    }

    pub fn with_purpose(&self, purpose: &str) -> Vec<LmRequest> {
        self.requests.lock().iter().filter(|r| r.purpose == purpose).cloned().collect()
    }

    pub fn count(&self) -> usize {
        self.requests.lock().len()
    }
}

impl<L: LanguageModel> LanguageModel for Recording<L> {
    fn complete(&self, request: &LmRequest) -> Result<LmResponse> {
        self.requests.lock().push(request.clone());
        self.inner.complete(request)
    }
}

/// A model answering every request through a closure.
pub struct FnLm<F>(pub F);

impl<F> LanguageModel for FnLm<F>
where
    F: Fn(&LmRequest) -> Result<LmResponse> + Send + Sync,
{
    fn complete(&self, request: &LmRequest) -> Result<LmResponse> {
        (self.0)(request)
    }
}

/// Every `"index": N` value in a prompt, in order of appearance.
pub fn prompt_indices(text: &str) -> Vec<usize> {
    text.match_indices("\"index\": ")
        .filter_map(|(at, m)| {
            let rest = &text[at + m.len()..];
            let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
            digits.parse().ok()
        })
        .collect()
}

/// A random offline game over players 1..=n.
///
/// When n >= 3, player n is a dummy and players 1 and 2 are symmetric.
#[derive(Clone)]
pub struct RandomGame {
    pub n: usize,
    table: Vec<f64>,
}

impl RandomGame {
    pub fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let table = (0..1usize << n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        RandomGame { n, table }
    }

    pub fn structured(&self) -> bool {
        self.n >= 3
    }

    fn canonical(&self, mut mask: usize) -> usize {
        if self.structured() {
            mask &= !(1 << (self.n - 1));
            let a = mask & 1 != 0;
            let b = mask & 2 != 0;
            mask &= !3;
            mask |= match (a, b) {
                (false, false) => 0,
                (true, true) => 3,
                _ => 1,
            };
        }
        mask
    }

    pub fn value_of_mask(&self, mask: usize) -> f64 {
        self.table[self.canonical(mask)]
    }

    pub fn value(&self, c: &Coalition) -> f64 {
        let mask = c.members().iter().fold(0usize, |m, &id| m | 1 << (id - 1));
        self.value_of_mask(mask)
    }

    pub fn players(&self) -> Vec<u32> {
        (1..=self.n as u32).collect()
    }

    pub fn characteristic(&self) -> CharacteristicFunction {
        let g = self.clone();
        let empty = g.value_of_mask(0);
        CharacteristicFunction::offline(TaskType::Regression, empty, move |c: &Coalition| g.value(c))
    }

    /// Shapley values by averaging marginals over all n! orderings.
    pub fn brute_force(&self) -> Vec<f64> {
        let n = self.n;
        let mut phi = vec![0.0; n];
        let mut perm: Vec<usize> = (0..n).collect();
        let mut count = 0usize;
        permute(&mut perm, 0, &mut |p| {
            let mut mask = 0usize;
            for &i in p {
                let before = self.value_of_mask(mask);
                mask |= 1 << i;
                phi[i] += self.value_of_mask(mask) - before;
            }
            count += 1;
        });
        phi.iter().map(|x| x / count as f64).collect()
    }
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

/// 200 games with n cycling through 1..=8.
pub fn random_games() -> Vec<RandomGame> {
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    (0..200).map(|i| RandomGame::new(1 + i % 8, &mut rng)).collect()
}

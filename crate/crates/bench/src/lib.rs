//! Fixtures shared by the benchmarks.

use obake_core::sim::random_template;
use obake_core::{FeatureVector, ProtocolParams, SensingSystem, UserToken};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn params(dim: usize, queries: u16) -> ProtocolParams {
    ProtocolParams::uniform(dim, 16, 64)
        .unwrap()
        .with_queries_per_round(queries)
        .unwrap()
        .with_max_rounds(u16::MAX)
        .unwrap()
}

/// Both roles past the setup exchange, plus the enrolled template.
pub fn opened(p: &ProtocolParams, seed: u64) -> (SensingSystem, UserToken, FeatureVector) {
    let mut r = rng(seed);
    let template = random_template(p, &mut r);
    let (mut system, setup) = SensingSystem::start(p.clone(), &mut r).unwrap();
    let mut token = UserToken::new(p.clone(), template.clone()).unwrap();
    let resp = token.on_setup(&setup, &mut r).unwrap();
    system.on_template(&resp).unwrap();
    (system, token, template)
}

//! Acceptance suite. Runs with a plain `main` so every criterion prints its
//! own PASS/FAIL line even when an earlier one fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use obake_core::kdf::CallCounts;
use obake_core::protocol::{MatchAnnounce, Query, SessionId, Setup, TemplateResponse};
use obake_core::sim::{run_session, run_trials, NoiseKind, SessionConfig, SessionOutcome, Tamper, TrialConfig};
use obake_core::wire::{decode, encode, TYPE_MATCH_ANNOUNCE};
use obake_core::{
    bbkdf, cell_index, centralize, vec_add, vec_sub, AbortReason, FeatureVector, Message, Outcome,
    ProtocolParams, SensingSystem, Tag, UserToken, Verifier,
};
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal as NormalSampler};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn random_vector(p: &ProtocolParams, r: &mut impl Rng) -> FeatureVector {
    let m = p.bits().modulus();
    FeatureVector::new((0..p.dim()).map(|_| r.random_range(0..m) as u32).collect(), p).unwrap()
}

fn random_params(r: &mut impl Rng) -> ProtocolParams {
    let d = *[2usize, 8, 16].choose(r).unwrap();
    let k = *[8u32, 16].choose(r).unwrap();
    let t = *[4u32, 8, 16].choose(r).unwrap();
    ProtocolParams::uniform(d, k, t).unwrap()
}

/// Plain integer cell of every component, without the library.
fn oracle_cells(v: &[u32], thresholds: &[u32]) -> Vec<u64> {
    v.iter()
        .zip(thresholds)
        .map(|(&x, &t)| u64::from(x) / (2 * u64::from(t)))
        .collect()
}

fn centered(x: i64, bits: u32) -> i64 {
    let m = 1i64 << bits;
    let r = x.rem_euclid(m);
    if r >= m / 2 {
        r - m
    } else {
        r
    }
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn completeness() -> Verdict {
    let start = Instant::now();
    let mut r = rng(0xC0);
    let mut bad = Vec::new();
    for i in 0..1000u64 {
        let p = random_params(&mut r);
        let template = random_vector(&p, &mut r);
        let t = p.thresholds()[0];
        let cfg = SessionConfig::new(p.clone(), template, NoiseKind::uniform(p.dim(), t - 1), i);
        let report = run_session(&cfg).map_err(|e| e.to_string())?;
        let ok = match &report.outcome {
            SessionOutcome::KeyEstablished { round: 0, system_key, token_key: Some(tk), .. } => {
                system_key.as_bytes() == tk.as_bytes()
            }
            _ => false,
        };
        if !ok {
            bad.push(i);
        }
    }
    let elapsed = start.elapsed();
    check(
        bad.is_empty() && elapsed < Duration::from_secs(30),
        format!("1000 sessions, {} failures, {:.2?}", bad.len(), elapsed),
    )
}

/// Per session: ℓ captures with one dimension shifted by `sign * t` and the
/// rest inside the threshold. Returns the number of token matches.
fn boundary_matches(sign: i64, seed: u64) -> Result<usize, String> {
    let mut r = rng(seed);
    let mut matches = 0;
    for _ in 0..1000 {
        let p = random_params(&mut r);
        let t = i64::from(p.thresholds()[0]);
        let template = random_vector(&p, &mut r);
        let (mut system, setup) = SensingSystem::start(p.clone(), &mut r).map_err(|e| e.to_string())?;
        let mut token = UserToken::new(p.clone(), template.clone()).unwrap();
        let resp = token.on_setup(&setup, &mut r).map_err(|e| e.to_string())?;
        system.on_template(&resp).map_err(|e| e.to_string())?;
        let captures: Vec<FeatureVector> = (0..p.max_queries_per_round())
            .map(|_| {
                let hit = r.random_range(0..p.dim());
                let noisy: Vec<i64> = template
                    .components()
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| {
                        let off = if i == hit { sign * t } else { r.random_range(-(t - 1)..=t - 1) };
                        i64::from(c) + off
                    })
                    .collect();
                FeatureVector::from_signed(&noisy, &p).unwrap()
            })
            .collect();
        let query = system.build_query(&captures, &mut r).map_err(|e| e.to_string())?;
        if token.on_query(&query).is_some() {
            matches += 1;
        }
    }
    Ok(matches)
}

fn adversarial_round_limits(sign: i64, seed: u64) -> Result<usize, String> {
    let mut r = rng(seed);
    let mut limited = 0;
    for i in 0..1000u64 {
        let p = random_params(&mut r).with_max_rounds(2).unwrap();
        let t = i64::from(p.thresholds()[0]);
        let mut offsets = vec![0i64; p.dim()];
        offsets[r.random_range(0..p.dim())] = sign * t;
        let cfg = SessionConfig::new(p.clone(), random_vector(&p, &mut r), NoiseKind::Adversarial(offsets), i);
        let report = run_session(&cfg).map_err(|e| e.to_string())?;
        if report.outcome == (SessionOutcome::Aborted { reason: AbortReason::RoundLimit }) {
            limited += 1;
        }
    }
    Ok(limited)
}

fn boundary_soundness() -> Verdict {
    let matches = boundary_matches(1, 0xB0)?;
    let limited = adversarial_round_limits(1, 0xB1)?;
    // Mirror image: the cell holds centre offsets -t..t-1, so a capture
    // shifted by -t is the one that leaves it.
    let mirror_matches = boundary_matches(-1, 0xB2)?;
    let mirror_limited = adversarial_round_limits(-1, 0xB3)?;
    check(
        matches == 0 && limited == 1000,
        format!(
            "offset +t: {matches}/1000 sessions matched, {limited}/1000 RoundLimit; \
             offset -t: {mirror_matches}/1000 matched, {mirror_limited}/1000 RoundLimit"
        ),
    )
}

fn centralization_suite() -> Verdict {
    let start = Instant::now();
    let p = ProtocolParams::uniform(1, 8, 4).unwrap();
    let v = |x: u32| FeatureVector::new(vec![x], &p).unwrap();
    let mut idempotence = 0u64;
    let mut congruence = 0u64;
    let centres: Vec<FeatureVector> = (0..256).map(|c| centralize(&v(c), &p).unwrap()).collect();
    for (c, centre) in centres.iter().enumerate() {
        idempotence += (centralize(centre, &p).unwrap() != *centre) as u64;
        let x = centre.components()[0];
        congruence += (x % 8 != 4 || x / 8 != c as u32 / 8) as u64;
    }
    let (mut close, mut close_bad, mut far, mut far_bad) = (0u64, 0u64, 0u64, 0u64);
    let mut far_bad_deltas = std::collections::BTreeSet::new();
    for a in 0..256u32 {
        for b in 0..256u32 {
            let diff = vec_sub(&v(a), &v(b)).unwrap();
            let delta = centered(i64::from(a) - i64::from(b), 8);
            for centre in &centres {
                let same = cell_index(&vec_add(&diff, centre).unwrap(), &p).unwrap()
                    == cell_index(centre, &p).unwrap();
                if delta.abs() < 4 {
                    close += 1;
                    close_bad += (!same) as u64;
                } else {
                    far += 1;
                    if same {
                        far_bad += 1;
                        far_bad_deltas.insert(delta);
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        idempotence == 0
            && congruence == 0
            && close_bad == 0
            && far_bad == 0
            && elapsed < Duration::from_secs(60),
        format!(
            "idempotence failures {idempotence}, congruence failures {congruence}, \
             |d|<4: {close_bad}/{close} differ, |d|>=4: {far_bad}/{far} share a cell \
             (d in {far_bad_deltas:?}), {elapsed:.2?}"
        ),
    )
}

fn kdf_oracle() -> Verdict {
    let mut r = rng(0xD0);
    let mut discrepancies = 0;
    let mut equal_cells = 0;
    for _ in 0..10_000 {
        let p = ProtocolParams::new(2, 8, vec![*[4u32, 16, 64].choose(&mut r).unwrap(), 8]).unwrap();
        let a = random_vector(&p, &mut r);
        let b = if r.random_bool(0.5) {
            let comps: Vec<u32> = a
                .components()
                .iter()
                .zip(p.thresholds())
                .map(|(&x, &t)| {
                    let w = 2 * t;
                    x / w * w + r.random_range(0..w)
                })
                .collect();
            FeatureVector::new(comps, &p).unwrap()
        } else {
            random_vector(&p, &mut r)
        };
        let oracle = oracle_cells(a.components(), p.thresholds())
            == oracle_cells(b.components(), p.thresholds());
        equal_cells += oracle as u32;
        if (bbkdf(&a, &p).unwrap() == bbkdf(&b, &p).unwrap()) != oracle {
            discrepancies += 1;
        }
    }
    check(
        discrepancies == 0,
        format!("10000 pairs ({equal_cells} same-cell), {discrepancies} discrepancies"),
    )
}

fn cell_hiding() -> Verdict {
    let p = ProtocolParams::uniform(2, 8, 4).unwrap();
    let template = FeatureVector::new(vec![17, 200], &p).unwrap();
    let cells = 256 / 8;
    let mut counts = vec![vec![0u64; cells]; p.dim()];
    let mut r = rng(0xE0);
    for _ in 0..10_000 {
        let (_, setup) = SensingSystem::start(p.clone(), &mut r).map_err(|e| e.to_string())?;
        let mut token = UserToken::new(p.clone(), template.clone()).unwrap();
        let resp = token.on_setup(&setup, &mut r).map_err(|e| e.to_string())?;
        for (i, c) in oracle_cells(resp.blinded_template.components(), p.thresholds())
            .into_iter()
            .enumerate()
        {
            counts[i][c as usize] += 1;
        }
    }
    let dist = ChiSquared::new((cells - 1) as f64).unwrap();
    let expected = 10_000.0 / cells as f64;
    let p_values: Vec<f64> = counts
        .iter()
        .map(|row| {
            let stat: f64 = row.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
            1.0 - dist.cdf(stat)
        })
        .collect();
    check(
        p_values.iter().all(|&pv| pv > 0.001),
        format!("p-values per dimension {p_values:.4?}"),
    )
}

fn tamper_rejection() -> Verdict {
    let mut r = rng(0xF0);
    let mut tag_mismatch = 0;
    let mut recovered = 0;
    for i in 0..1000u64 {
        let p = random_params(&mut r);
        let t = p.thresholds()[0];
        let noise = NoiseKind::uniform(p.dim(), t - 1);
        let mut cfg = SessionConfig::new(p.clone(), random_vector(&p, &mut r), noise, i);
        cfg.tamper = Tamper::FlipTagBit;
        if run_session(&cfg).map_err(|e| e.to_string())?.outcome
            == (SessionOutcome::Aborted { reason: AbortReason::TagMismatch })
        {
            tag_mismatch += 1;
        }

        cfg.tamper = Tamper::CorruptQueries(1);
        cfg.record_transcript = true;
        let report = run_session(&cfg).map_err(|e| e.to_string())?;
        let early_announce = report.transcript.iter().any(|rec| {
            rec.frame.first() == Some(&TYPE_MATCH_ANNOUNCE)
                && matches!(decode(&rec.frame, &p), Ok(Message::MatchAnnounce(MatchAnnounce { round: 0, .. })))
        });
        let ok = matches!(report.outcome, SessionOutcome::KeyEstablished { round: 1, .. })
            && report.outcome.keys_agree()
            && !early_announce;
        recovered += ok as u32;
    }
    check(
        tag_mismatch == 1000 && recovered == 1000,
        format!("tag flip: {tag_mismatch}/1000 TagMismatch; corrupted query: {recovered}/1000 ignored then established in round 1"),
    )
}

fn random_message(p: &ProtocolParams, r: &mut impl Rng) -> Message {
    let bytes = |r: &mut dyn RngCore, n: usize| {
        let mut v = vec![0u8; n];
        r.fill_bytes(&mut v);
        v
    };
    match r.random_range(0..5) {
        0 => {
            let qlen = r.random_range(1..=255);
            Message::Setup(Setup {
                session_id: SessionId::new(bytes(r, qlen)).unwrap(),
                global_nonce: bytes(r, p.nonce_len()),
            })
        }
        1 => Message::TemplateResponse(TemplateResponse { blinded_template: random_vector(p, r) }),
        2 => {
            let count = r.random_range(1..=usize::from(p.max_queries_per_round()));
            let mut challenge = [0u8; 32];
            r.fill_bytes(&mut challenge);
            Message::Query(Query {
                round: r.random(),
                challenge,
                verifiers: (0..count)
                    .map(|_| Verifier::from_bytes(bytes(r, p.verifier_len())))
                    .collect(),
            })
        }
        3 => Message::MatchAnnounce(MatchAnnounce {
            round: r.random(),
            index: r.random(),
            tag: Tag::from_bytes(bytes(r, p.tag_len())),
        }),
        _ => Message::Outcome(
            *[
                Outcome::KeyEstablished,
                Outcome::Abort(AbortReason::TagMismatch),
                Outcome::Abort(AbortReason::RoundLimit),
                Outcome::Abort(AbortReason::ProtocolViolation),
            ]
            .choose(r)
            .unwrap(),
        ),
    }
}

fn random_codec_params(r: &mut impl Rng) -> ProtocolParams {
    let d = r.random_range(1..=16);
    let k = *[8u32, 16, 32].choose(r).unwrap();
    let thresholds = (0..d).map(|_| 1u32 << r.random_range(0..k - 1)).collect();
    ProtocolParams::new(d, k, thresholds)
        .unwrap()
        .with_verifier_len(r.random_range(1..=32))
        .unwrap()
        .with_tag_len(r.random_range(1..=32))
        .unwrap()
        .with_queries_per_round(r.random_range(1..=8))
        .unwrap()
}

fn codec() -> Verdict {
    let mut r = rng(0xA0);
    let mut roundtrip_bad = 0;
    let mut corpus = Vec::new();
    for _ in 0..10_000 {
        let p = random_codec_params(&mut r);
        let msg = random_message(&p, &mut r);
        let frame = encode(&msg, &p).map_err(|e| e.to_string())?;
        let ok = decode(&frame, &p).as_ref() == Ok(&msg) && encode(&msg, &p).as_ref() == Ok(&frame);
        roundtrip_bad += (!ok) as u32;
        if corpus.len() < 256 {
            corpus.push((p, frame));
        }
    }

    let start = Instant::now();
    let mut accepted = 0;
    for i in 0..100_000 {
        let (p, seed_frame) = &corpus[i % corpus.len()];
        let input = match i % 4 {
            0 => {
                let mut f = vec![0u8; r.random_range(0..96)];
                r.fill_bytes(&mut f);
                if let Some(b) = f.first_mut() {
                    *b = r.random_range(0..7);
                }
                f
            }
            1 => {
                let mut f = seed_frame.clone();
                let bit = r.random_range(0..f.len() * 8);
                f[bit / 8] ^= 1 << (bit % 8);
                f
            }
            2 => seed_frame[..r.random_range(0..seed_frame.len())].to_vec(),
            _ => {
                let mut f = seed_frame.clone();
                let extra = r.random_range(1..8);
                f.extend((0..extra).map(|_| r.random::<u8>()));
                f
            }
        };
        accepted += decode(&input, p).is_ok() as u32;
    }
    let fuzz_time = start.elapsed();

    let p = ProtocolParams::uniform(2, 8, 4).unwrap();
    let setup_frame = [0x01, 0x00, 0x02, 0x61, 0x62, 0x00, 0x02, 0x0A, 0x14];
    let setup = Message::Setup(Setup {
        session_id: SessionId::new(b"ab".to_vec()).unwrap(),
        global_nonce: vec![0x0A, 0x14],
    });
    let template_frame = [0x02, 0x66, 0x3A];
    let template = Message::TemplateResponse(TemplateResponse {
        blinded_template: FeatureVector::new(vec![102, 58], &p).unwrap(),
    });
    let conformance = decode(&setup_frame, &p).as_ref() == Ok(&setup)
        && decode(&template_frame, &p).as_ref() == Ok(&template)
        && encode(&setup, &p).unwrap() == setup_frame
        && encode(&template, &p).unwrap() == template_frame;

    check(
        roundtrip_bad == 0 && conformance,
        format!(
            "10000 roundtrips, {roundtrip_bad} mismatches; 100000 fuzz inputs in {fuzz_time:.2?} \
             ({accepted} decoded); conformance frames {}",
            if conformance { "ok" } else { "MISMATCH" }
        ),
    )
}

fn gaussian_oracle() -> Verdict {
    let (t, sigma, trials) = (4u32, 2.0f64, 10_000u32);
    let p = ProtocolParams::uniform(2, 8, t)
        .unwrap()
        .with_queries_per_round(1)
        .unwrap()
        .with_max_rounds(1)
        .unwrap();
    let report = run_trials(&TrialConfig::new(p, NoiseKind::gaussian(2, sigma), trials, 0x6A));
    let empirical = report.success_rate();

    // Brute force: the system's KDF input is the token's anchor shifted by
    // minus the capture noise; count how often it stays in the anchor's cell.
    let mut r = rng(0x6B);
    let normal = NormalSampler::new(0.0, sigma).unwrap();
    let w = 2 * i64::from(t);
    let samples = 200_000;
    let hits = (0..samples)
        .filter(|_| {
            (0..2).all(|_| {
                let anchor = r.random_range(0..256 / w) * w + i64::from(t);
                let noise = normal.sample(&mut r).round() as i64;
                (anchor - noise).rem_euclid(256) / w == anchor / w
            })
        })
        .count();
    let brute = hits as f64 / samples as f64;

    // Closed form of the same event: rounded noise in -(t-1)..=t per dimension.
    let n = Normal::new(0.0, sigma).unwrap();
    let per_dim = n.cdf(f64::from(t) + 0.5) - n.cdf(-f64::from(t) + 0.5);
    let exact = per_dim * per_dim;

    check(
        (empirical - brute).abs() <= 0.02 && (empirical - exact).abs() <= 0.02,
        format!(
            "empirical {:.4} vs brute force {:.4} vs closed form {:.4} over {trials} trials",
            empirical, brute, exact
        ),
    )
}

fn token_work_bound() -> Verdict {
    let mut r = rng(0x90);
    let (mut miss_calls, mut hit_calls) = (CallCounts::default(), CallCounts::default());
    let (mut misses, mut hits, mut comparisons, mut verifiers) = (0u64, 0u64, 0u64, 0u64);
    for _ in 0..200 {
        let p = random_params(&mut r);
        let template = random_vector(&p, &mut r);
        let (mut system, setup) = SensingSystem::start(p.clone(), &mut r).map_err(|e| e.to_string())?;
        let mut token = UserToken::new(p.clone(), template.clone()).unwrap();
        let resp = token.on_setup(&setup, &mut r).map_err(|e| e.to_string())?;
        system.on_template(&resp).map_err(|e| e.to_string())?;
        let ell = usize::from(p.max_queries_per_round());

        // A round of far-off captures, then one with the template itself.
        let far: Vec<FeatureVector> = (0..ell)
            .map(|_| {
                let shifted: Vec<i64> = template
                    .components()
                    .iter()
                    .map(|&c| i64::from(c) + 4 * i64::from(p.thresholds()[0]))
                    .collect();
                FeatureVector::from_signed(&shifted, &p).unwrap()
            })
            .collect();
        let query = system.build_query(&far, &mut r).map_err(|e| e.to_string())?;
        let before = CallCounts::snapshot();
        let reply = token.on_query(&query);
        let spent = CallCounts::since(before);
        if reply.is_some() {
            return Err("far-off query matched".into());
        }
        miss_calls.bbkdf += spent.bbkdf;
        miss_calls.mac += spent.mac;
        misses += 1;

        let mut close = far.clone();
        close[r.random_range(0..ell)] = template.clone();
        let query = system.build_query(&close, &mut r).map_err(|e| e.to_string())?;
        let before = CallCounts::snapshot();
        let reply = token.on_query(&query);
        let spent = CallCounts::since(before);
        if reply.is_none() {
            return Err("template query did not match".into());
        }
        if spent != (CallCounts { bbkdf: 0, mac: 1 }) {
            return Err(format!("matching query cost {spent:?}"));
        }
        hit_calls.bbkdf += spent.bbkdf;
        hit_calls.mac += spent.mac;
        hits += 1;
        comparisons += token.comparisons();
        verifiers += 2 * ell as u64;
    }
    check(
        miss_calls == CallCounts::default()
            && hit_calls == (CallCounts { bbkdf: 0, mac: hits })
            && comparisons == verifiers,
        format!(
            "{misses} non-matching queries: {miss_calls:?}; {hits} matching queries: {hit_calls:?}; \
             {comparisons} comparisons for {verifiers} verifiers"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("completeness", completeness),
        ("boundary soundness", boundary_soundness),
        ("centralization suite", centralization_suite),
        ("fuzzy-KDF oracle equivalence", kdf_oracle),
        ("cell-index hiding", cell_hiding),
        ("tamper rejection", tamper_rejection),
        ("codec", codec),
        ("gaussian success-rate oracle", gaussian_oracle),
        ("token work bound", token_work_bound),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        match verdict {
            Ok(detail) => println!("criterion {} PASS {name} [{elapsed:.2?}]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL {name} [{elapsed:.2?}]: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

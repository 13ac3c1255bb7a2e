//! Acceptance suite: every criterion prints one PASS/FAIL line and the
//! process exits non-zero if any fails.
//!
//! Runs without the libtest harness so the report lines are always shown.

mod common;

use std::time::{Duration, Instant};

use bitshield::campaign::{
    bitscan, chunk_explore, collapse_point, run_campaign, CampaignConfig, CampaignResult, ScanMode, CHUNK_EXPLORE_BER,
    DEFAULT_BERS, DEFAULT_REPETITIONS,
};
use bitshield::evalharness::{accuracy, TinyModel};
use bitshield::oracle::{
    analytic_line_exact_rate, exhaustive_double_flip, exhaustive_single_flip, line_exact_frequency, FlipTarget,
};
use bitshield::schemes::{feasible_chunk_sizes, overhead_report, pack_image, unpack_image, LineStatus, WordCodec};
use bitshield::{FloatLayout, SchemeConfig, SchemeKind, StorageFloat, Tensor, Word};
use common::pinned;
use half::f16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CAMPAIGN_SEED: u64 = 1;
/// A "collapse" is a mean accuracy drop of at least ten points.
const COLLAPSE_DROP: f64 = 0.10;
const SUSTAIN_DROP: f64 = 0.01;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed < Duration::from_secs(secs)
}

fn random_lines(rng: &mut ChaCha8Rng, layout: FloatLayout, words: usize) -> Vec<u32> {
    (0..words).map(|_| rng.random::<u32>() & layout.mask()).collect()
}

fn secded_exhaustive() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut ok = true;
    let mut summary = Vec::new();
    for (width, singles, pairs) in [(64u32, 72usize, 2556usize), (128, 137, 9316)] {
        let scheme = SchemeConfig::new(SchemeKind::Secded, width);
        let wpl = scheme.words_per_line(FloatLayout::FP16);
        let (mut exact, mut due, mut silent) = (0, 0, 0);
        let lines = 10;
        for _ in 0..lines {
            let target = FlipTarget::line(
                scheme,
                FloatLayout::FP16,
                random_lines(&mut rng, FloatLayout::FP16, wpl),
            );
            let one = exhaustive_single_flip(&target).unwrap();
            let two = exhaustive_double_flip(&target).unwrap();
            ok &= one.len() == singles && two.len() == pairs;
            ok &= one
                .entries
                .iter()
                .all(|e| e.exact && matches!(e.status, LineStatus::Corrected(_)));
            ok &= two.due_count() == pairs && two.silent_count() == 0;
            exact += one.exact_count();
            due += two.due_count();
            silent += two.silent_count();
        }
        summary.push(format!(
            "W={width}: singles exact {exact}/{}, pairs DUE {due}/{}, silent {silent}",
            lines * singles,
            lines * pairs
        ));
    }
    let dt = t.elapsed();
    verdict(ok && within(dt, 10), format!("{} in {dt:.2?}", summary.join("; ")))
}

fn mset_oracle() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut ok = true;
    let mut checked = 0;
    for layout in [FloatLayout::FP16, FloatLayout::FP32] {
        let n = layout.total_bits();
        let msb = layout.exp_msb();
        for _ in 0..10_000 {
            let word = Word::new(rng.random(), layout);
            let table = exhaustive_single_flip(&FlipTarget::Word {
                word,
                codec: WordCodec::Mset,
            })
            .unwrap();
            for e in &table.entries {
                let d = e.decoded[0];
                ok &= d & 0b11 == 0;
                if [n - 2, 1, 0].contains(&e.positions[0]) {
                    ok &= (d >> msb) & 1 == (word.bits() >> msb) & 1;
                    checked += 1;
                }
            }
        }
    }
    let dt = t.elapsed();
    verdict(
        ok && within(dt, 5),
        format!("{checked} triple-site flips over 2x10^4 words, MSB restored and copies cleared: {ok}; {dt:.2?}"),
    )
}

fn cep_oracle() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut ok = true;
    let mut combos = 0;
    for layout in [FloatLayout::FP16, FloatLayout::FP32] {
        let n = layout.total_bits();
        for c in feasible_chunk_sizes(n) {
            combos += 1;
            for _ in 0..10_000 {
                let word = Word::new(rng.random(), layout);
                let table = exhaustive_single_flip(&FlipTarget::Word {
                    word,
                    codec: WordCodec::Cep(c),
                })
                .unwrap();
                for e in &table.entries {
                    // Group i covers encoded bits [n-(i+1)(c+1), n-i(c+1)) and
                    // decodes to bits [n-(i+1)c, n-ic).
                    let i = (n - 1 - e.positions[0]) / (c + 1);
                    let chunk = ((1u32 << c) - 1) << (n - (i + 1) * c);
                    let d = e.decoded[0];
                    ok &= e.chunks_zeroed == 1;
                    ok &= d & chunk == 0;
                    ok &= d & !chunk == table.reference[0] & !chunk;
                }
            }
        }
    }
    // Independent groups in one 64-bit line of FP16 words at c=3.
    let scheme = SchemeConfig::new(SchemeKind::Cep, 64);
    let words = random_lines(&mut rng, FloatLayout::FP16, 4);
    let table = exhaustive_single_flip(&FlipTarget::line(scheme, FloatLayout::FP16, words)).unwrap();
    let mut groups: Vec<(usize, u32)> = Vec::new();
    for e in &table.entries {
        let word = (e.positions[0] / 16) as usize;
        let group = (15 - e.positions[0] % 16) / 4;
        let chunk = 0b111 << (16 - (group + 1) * 3);
        ok &= e.chunks_zeroed == 1 && e.decoded[word] & chunk == 0;
        ok &= (0..4).all(|k| {
            let keep = if k == word { !chunk } else { u32::MAX };
            e.decoded[k] & keep == table.reference[k] & keep
        });
        groups.push((word, group));
    }
    groups.sort_unstable();
    groups.dedup();
    ok &= groups.len() == 16;
    let dt = t.elapsed();
    verdict(
        ok && within(dt, 10),
        format!(
            "{combos} (dtype, c) combinations x 10^4 words contained to one chunk; {} groups per 64-bit FP16 line; {dt:.2?}",
            groups.len()
        ),
    )
}

fn round_trip_tensors<T: StorageFloat>(rng: &mut ChaCha8Rng) -> Vec<Tensor<T>> {
    // Finite values across many binades, plus signed zeros and subnormals.
    let mut values = Vec::with_capacity(100_003);
    while values.len() < 100_003 {
        let v = T::from_pattern(rng.random::<u32>() & T::LAYOUT.mask());
        if v.is_finite() {
            values.push(v);
        }
    }
    let tail = values.split_off(60_000);
    vec![
        Tensor::new("a", vec![300, 200], values),
        Tensor::new("b", vec![tail.len()], tail),
    ]
}

fn round_trip_all<T: StorageFloat>(rng: &mut ChaCha8Rng) -> (usize, bool) {
    let tensors = round_trip_tensors::<T>(rng);
    let mut ok = true;
    let mut combos = 0;
    for kind in SchemeKind::ALL {
        for width in [64, 128] {
            let scheme = SchemeConfig::new(kind, width);
            let mask = scheme.word_codec().preserved_mask(T::LAYOUT);
            let image = pack_image(&tensors, &scheme).unwrap();
            let (back, status) = unpack_image::<T>(&image, &scheme).unwrap();
            ok &= status.is_all_clean();
            for (a, b) in tensors.iter().zip(&back) {
                ok &= a.shape == b.shape && a.name == b.name;
                ok &= a
                    .data
                    .iter()
                    .zip(&b.data)
                    .all(|(x, y)| x.to_pattern() & mask == y.to_pattern());
            }
            combos += 1;
        }
    }
    (combos, ok)
}

fn zero_fault_round_trips() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (c16, ok16) = round_trip_all::<f16>(&mut rng);
    let (c32, ok32) = round_trip_all::<f32>(&mut rng);
    let dt = t.elapsed();
    verdict(
        ok16 && ok32 && c16 + c32 == 24 && within(dt, 30),
        format!(
            "{} scheme/dtype/width combinations on 100003 words each; {dt:.2?}",
            c16 + c32
        ),
    )
}

fn overhead_accounting() -> Verdict {
    let params = pinned().fp16.parameter_count() as u64;
    let mut ok = true;
    let mut parts = Vec::new();
    for layout in [FloatLayout::FP16, FloatLayout::FP32] {
        for width in [64u32, 128] {
            let lines = params.div_ceil((width / layout.total_bits()) as u64);
            for kind in SchemeKind::ALL {
                let r = overhead_report(&SchemeConfig::new(kind, width), params, layout);
                let per_line = match (kind.has_secded(), width) {
                    (false, _) => 0,
                    (true, 64) => 8,
                    (true, _) => 9,
                };
                ok &= r.lines == lines && r.parity_bits == lines * per_line;
                if !kind.has_secded() {
                    ok &= r.parity_bytes == 0 && r.to_string().contains("0 bytes");
                }
            }
            let r = overhead_report(&SchemeConfig::new(SchemeKind::Secded, width), params, layout);
            let text = r.to_string();
            ok &= text.contains("Hamming-only") && text.contains("reference figure");
            if layout == FloatLayout::FP16 {
                parts.push(format!(
                    "W={width}: {} check bits/line, {:.2}% raw, {:.2}% Hamming-only, reference {:.1}%",
                    r.check_bits_per_line,
                    100.0 * r.fraction(),
                    100.0 * r.hamming_only_fraction(),
                    100.0 * r.reference_fraction()
                ));
            }
        }
    }
    let r64 = overhead_report(&SchemeConfig::new(SchemeKind::Secded, 64), params, FloatLayout::FP16);
    let r128 = overhead_report(&SchemeConfig::new(SchemeKind::Secded, 128), params, FloatLayout::FP16);
    ok &= r64.fraction() == 0.125 && r64.hamming_only_fraction() == 7.0 / 64.0;
    ok &= r128.fraction() == 9.0 / 128.0 && r128.hamming_only_fraction() == 8.0 / 128.0;
    verdict(ok, format!("{}; MSET/CEP 0 bytes", parts.join("; ")))
}

fn monte_carlo_vs_analytic() -> Verdict {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    let scheme = SchemeConfig::new(SchemeKind::Secded, 64);
    for (k, p) in [1e-4, 1e-3, 1e-2].into_iter().enumerate() {
        let (exact, total) = line_exact_frequency(64, p, 100_000, 600 + k as u64).unwrap();
        let q = analytic_line_exact_rate(&scheme, p).unwrap();
        let freq = exact as f64 / total as f64;
        let se = (q * (1.0 - q) / total as f64).sqrt();
        let z = (freq - q) / se;
        ok &= z.abs() <= 3.0;
        parts.push(format!("p={p:e}: {freq:.5} vs {q:.5} (z={z:+.2})"));
    }
    let dt = t.elapsed();
    verdict(ok && within(dt, 60), format!("{}; {dt:.2?}", parts.join("; ")))
}

fn campaign<T: StorageFloat>(config: &CampaignConfig, model: &TinyModel<T>) -> CampaignResult {
    let image = pack_image(&model.tensors(), &config.scheme).unwrap();
    run_campaign(config, model, &pinned().data.eval, &image).unwrap()
}

fn campaign_protocol() -> Verdict {
    let t = Instant::now();
    let p = pinned();
    let clean = accuracy(&p.fp16, &p.data.eval).unwrap();
    let config = CampaignConfig::new(
        SchemeConfig::new(SchemeKind::Unprotected, 64),
        DEFAULT_BERS.to_vec(),
        CAMPAIGN_SEED,
    );
    let first = campaign(&config, &p.fp16);
    let second = campaign(&config, &p.fp16);
    let iters: Vec<usize> = first.rows.iter().map(|r| r.iterations_run).collect();
    let ok = clean >= 0.90
        && first.rows.len() == DEFAULT_BERS.len()
        && iters.iter().all(|&n| (100..=1500).contains(&n))
        && first == second;
    let dt = t.elapsed();
    verdict(
        ok && within(dt, 600),
        format!(
            "clean {clean:.4}; unprotected FP16 iterations per BER {iters:?}; rerun identical: {}; {dt:.2?}",
            first == second
        ),
    )
}

fn drop_at(result: &CampaignResult, k: usize) -> f64 {
    result.clean_score - result.rows[k].mean_accuracy
}

fn curve_shape() -> Verdict {
    let t = Instant::now();
    let model = &pinned().fp16;
    let grid = |lo: f64, hi: f64, steps_per_decade: f64| -> Vec<f64> {
        let n = ((hi / lo).log10() * steps_per_decade).round() as i32;
        (0..=n).map(|i| lo * 10f64.powf(i as f64 / steps_per_decade)).collect()
    };
    let scheme = |kind| SchemeConfig::new(kind, 64);

    // (a) Unprotected collapse point.
    let unprot = campaign(
        &CampaignConfig::new(scheme(SchemeKind::Unprotected), grid(1e-8, 1e-4, 4.0), CAMPAIGN_SEED),
        model,
    );
    let p_u = collapse_point(&unprot.rows, unprot.clean_score, COLLAPSE_DROP);
    let a = p_u.is_some_and(|p| p <= 1e-3);
    let p_u = p_u.unwrap_or(f64::NAN);

    // (b) SECDED from p_u up to ten times p_u.
    let mut cfg = CampaignConfig::new(
        scheme(SchemeKind::Secded),
        vec![p_u, p_u * 10f64.sqrt(), 10.0 * p_u],
        CAMPAIGN_SEED,
    );
    cfg.min_iterations = 400;
    let sec_low = if a { Some(campaign(&cfg, model)) } else { None };
    let b_drops: Vec<f64> = sec_low
        .as_ref()
        .map(|r| (0..r.rows.len()).map(|k| drop_at(r, k)).collect())
        .unwrap_or_default();
    let b = a && b_drops.iter().all(|&d| d <= SUSTAIN_DROP);

    // (c) SECDED collapse point, then CEP(3) there.
    let mut cfg = CampaignConfig::new(scheme(SchemeKind::Secded), grid(1e-5, 1e-3, 8.0), CAMPAIGN_SEED);
    cfg.min_iterations = 400;
    let sec = campaign(&cfg, model);
    let p_sc = collapse_point(&sec.rows, sec.clean_score, COLLAPSE_DROP);
    let (c, cep_detail) = match p_sc {
        Some(p) => {
            let mut cfg = CampaignConfig::new(scheme(SchemeKind::Cep), vec![p], CAMPAIGN_SEED);
            cfg.min_iterations = 1000;
            cfg.max_iterations = 1000;
            let cep = campaign(&cfg, model);
            let d = drop_at(&cep, 0);
            (
                d <= SUSTAIN_DROP,
                format!(
                    "CEP(3) drop at {p:.3e}: {:.2} points (se {:.2})",
                    100.0 * d,
                    100.0 * cep.rows[0].standard_error()
                ),
            )
        }
        None => (false, "SECDED never collapsed on the grid".into()),
    };
    let dt = t.elapsed();
    verdict(
        a && b && c,
        format!(
            "(a) unprotected collapse {p_u:.3e} [{}]; (b) SECDED drops at 1x/3.2x/10x: {:?} points [{}]; (c) SECDED collapse {} ; {cep_detail} [{}]; {dt:.2?}",
            if a { "ok" } else { "FAIL" },
            b_drops.iter().map(|d| format!("{:.2}", 100.0 * d)).collect::<Vec<_>>(),
            if b { "ok" } else { "FAIL" },
            p_sc.map_or("none".into(), |p| format!("{p:.3e}")),
            if c { "ok" } else { "FAIL" },
        ),
    )
}

fn bitscan_shape() -> Verdict {
    let t = Instant::now();
    let p = pinned();
    let msb = FloatLayout::FP16.exp_msb();
    let scan = |mode| {
        bitscan(
            &p.fp16,
            &p.data.eval,
            &[msb, 0],
            DEFAULT_REPETITIONS,
            CAMPAIGN_SEED,
            mode,
        )
        .unwrap()
    };
    let unprot = scan(ScanMode::Unprotected);
    let mset = scan(ScanMode::Mset);
    let msb_below = unprot[0].fraction_below(0.05);
    let msb_mset = mset[0].fraction_within(0.005);
    let lsb_unprot = unprot[1].fraction_within(0.005);
    let lsb_mset = mset[1].fraction_within(0.005);
    let dt = t.elapsed();
    verdict(
        msb_below >= 0.20 && msb_mset == 1.0 && lsb_unprot == 1.0 && lsb_mset == 1.0 && within(dt, 120),
        format!(
            "bit {msb}: {:.1}% below clean-5 unprotected, {:.1}% within 0.5 with MSET; bit 0: {:.1}% / {:.1}% within 0.5; {dt:.2?}",
            100.0 * msb_below,
            100.0 * msb_mset,
            100.0 * lsb_unprot,
            100.0 * lsb_mset
        ),
    )
}

fn chunk_exploration() -> Verdict {
    let p = pinned();
    let base = CampaignConfig::new(
        SchemeConfig::new(SchemeKind::Cep, 64),
        vec![CHUNK_EXPLORE_BER],
        CAMPAIGN_SEED,
    );
    let report = chunk_explore(&base, &p.fp16, &p.data.eval).unwrap();
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("c={}: {:.5}", r.chunk_size, r.result.mean_accuracy))
        .collect();
    verdict(
        (report.monotone || report.flagged) && report.default_within_noise,
        format!(
            "BER {:e}: {}; best c={}, monotone {}, flagged {}, c=3 within noise {}",
            report.ber,
            rows.join(", "),
            report.best_chunk,
            report.monotone,
            report.flagged,
            report.default_within_noise
        ),
    )
}

fn main() {
    // `cargo test -- <filter>` style arguments are accepted and ignored.
    let criteria: [Criterion; 10] = [
        ("SECDED exhaustive single/double flips", secded_exhaustive),
        ("MSET triple-site oracle", mset_oracle),
        ("CEP single-flip containment", cep_oracle),
        ("zero-fault round trips", zero_fault_round_trips),
        ("overhead accounting", overhead_accounting),
        ("SECDED line-exact Monte-Carlo vs analytic", monte_carlo_vs_analytic),
        ("campaign protocol and replay", campaign_protocol),
        ("accuracy-vs-BER curve shape", curve_shape),
        ("bitscan shape", bitscan_shape),
        ("chunk-size exploration", chunk_exploration),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let v = run();
        if !v.passed {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} -- {}",
            i + 1,
            if v.passed { "PASS" } else { "FAIL" },
            name,
            v.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Acceptance suite. Each test checks one criterion and prints a single
//! `criterion N: PASS|FAIL` line; run with `--nocapture` to see them all.

use std::cmp::Ordering;
use std::collections::HashMap;

use psop_core::corpus::{builtin_kernels, kernel, Kernel, Pattern};
use psop_core::detector::{collect, detect, fix_iteratively, DetectionConfig};
use psop_core::engine::{execute, run_batch, Engine, EngineConfig, RunTrace, TraceDump};
use psop_core::evaluator::{evaluate, summarize};
use psop_core::tac::BarrierSet;
use psop_core::transcendental::{Expr, Function, OracleConfig};
use psop_mpfloat::{relative_error, Format, MpFloat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, title: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(detail) => println!("criterion {n:>2}: PASS  {title}: {detail}"),
        Err(detail) => {
            println!("criterion {n:>2}: FAIL  {title}: {detail}");
            panic!("criterion {n} failed: {detail}");
        }
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn grid_inputs(k: &Kernel) -> Vec<Vec<MpFloat>> {
    k.default_grid(Format::BINARY64).into_iter().map(|x| vec![x]).collect()
}

#[test]
fn criterion_01_binary32_representation() {
    let outcome = (|| {
        let v = MpFloat::from_decimal_string("0.1", 24).map_err(|e| e.to_string())?;
        let text = v.to_decimal_string(27);
        check(text == "0.100000001490116119384765625", || format!("got {text}"))?;
        check(v.to_decimal_exact() == text, || "not the exact expansion".into())?;
        Ok(text)
    })();
    verdict(1, "0.1 at 24 bits", outcome);
}

#[test]
fn criterion_02_accumulation() {
    let outcome = (|| {
        let k = kernel("accum_kernel").map_err(|e| e.to_string())?;
        let cfg = EngineConfig {
            p_orig: 24,
            ..EngineConfig::default()
        };
        let t = execute(&k.program, &[MpFloat::zero(24)], &cfg, &BarrierSet::new()).map_err(|e| e.to_string())?;
        let sum = t.output.original;
        let text = sum.to_decimal_string(30);
        check(text == "999.902893066406250000000000000", || format!("sum {text}"))?;
        let exact = MpFloat::from_u64(1000, 24);
        let err = relative_error(&exact, &sum, 128);
        let want = MpFloat::from_decimal_string("9.710693359375e-5", 128).map_err(|e| e.to_string())?;
        check(err.same_value(&want), || {
            format!("relative error {}", err.to_decimal_string(30))
        })?;
        let digits = err.to_scientific(30);
        check(
            digits.exponent == -5 && digits.digits == format!("{:0<30}", "9710693359375"),
            || format!("relative error digits {}", digits.to_e_notation()),
        )?;
        Ok(format!(
            "sum {text}, relative error {}",
            err.to_scientific(13).to_e_notation()
        ))
    })();
    verdict(2, "accumulation at 24 bits", outcome);
}

/// Nearest integer to a finite binary64 value, ties to even, by integer
/// arithmetic on its bit fields.
fn nearest_even_integer(x: f64) -> i64 {
    let bits = x.to_bits();
    let neg = bits >> 63 == 1;
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, exp) = if biased == 0 {
        (frac, -1074)
    } else {
        (frac | 1 << 52, biased - 1075)
    };
    let mag: i64 = if exp >= 0 {
        (mant as i64) << exp
    } else if -exp >= 64 {
        0
    } else {
        let shift = -exp as u32;
        let q = mant >> shift;
        let rem = mant & ((1u64 << shift) - 1);
        let half = 1u64 << (shift - 1);
        let up = rem > half || (rem == half && q & 1 == 1);
        (q + u64::from(up)) as i64
    };
    if neg {
        -mag
    } else {
        mag
    }
}

#[test]
fn criterion_03_magic_constant() {
    let outcome = (|| {
        let k = kernel("round_kernel").map_err(|e| e.to_string())?;
        let cfg = EngineConfig::default();
        let t =
            execute(&k.program, &[MpFloat::from_f64(13.75)], &cfg, &BarrierSet::new()).map_err(|e| e.to_string())?;
        check(t.output.original.to_f64() == 14.0, || {
            format!("13.75 -> {}", t.output.original)
        })?;
        let three51 = MpFloat::from_binary64_words(0, 0x4338_0000);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut failures = 0;
        for _ in 0..10_000 {
            let e: i32 = rng.gen_range(-60..51);
            let m: f64 = rng.gen_range(1.0..2.0);
            let x = if rng.gen() { -m } else { m } * 2f64.powi(e);
            let mx = MpFloat::from_f64(x);
            let r = mx.add(&three51, Format::BINARY64).sub(&three51, Format::BINARY64);
            if r.to_i64_exact() != Some(nearest_even_integer(x)) {
                failures += 1;
            }
        }
        check(failures == 0, || format!("{failures} of 10000 mismatches"))?;
        Ok("13.75 -> 14; 10000 random |x| < 2^51, 0 mismatches".into())
    })();
    verdict(3, "magic-constant rounding", outcome);
}

#[test]
fn criterion_04_exp_trace() {
    let outcome = (|| {
        let k = kernel("exp_kernel").map_err(|e| e.to_string())?;
        let t = execute(
            &k.program,
            &[MpFloat::from_f64(0.45)],
            &EngineConfig::default(),
            &BarrierSet::new(),
        )
        .map_err(|e| e.to_string())?;
        let expected = [
            "5.88737542944107e-17",
            "5.19269415022400e-17",
            "5.19269415022400e-17",
            "5.40327067910990e-1",
        ];
        let mut got = Vec::new();
        for (id, want) in expected.iter().enumerate() {
            let sample = t
                .samples
                .iter()
                .find(|s| s.instr == id)
                .ok_or(format!("no sample for {id}"))?;
            let want = MpFloat::from_decimal_string(want, 128)
                .map_err(|e| e.to_string())?
                .to_scientific(12);
            let have = sample.rel_err.to_scientific(12);
            check(have == want, || {
                format!("instruction {id}: {} vs {}", have.to_e_notation(), want.to_e_notation())
            })?;
            got.push(have.to_e_notation());
        }
        Ok(got.join(", "))
    })();
    verdict(4, "exp trace at x = 0.45", outcome);
}

#[test]
fn criterion_05_detection() {
    let outcome = (|| {
        let cfg = EngineConfig::default();
        let det = DetectionConfig {
            e0: 1e-6,
            p0: 0.5,
            p1: 0.1,
            ..DetectionConfig::default()
        };
        // Instruction expected to be flagged first (or none).
        let expect: HashMap<&str, Option<&str>> = [
            ("round_kernel", Some("r")),
            ("exp_kernel", Some("t10")),
            ("sin_kernel", Some("fn")),
            ("union_scale_kernel", Some("y")),
            ("accum_kernel", None),
            ("cancel_kernel", None),
        ]
        .into_iter()
        .collect();
        let mut lines = Vec::new();
        for k in builtin_kernels() {
            let agg = collect(&k.program, &grid_inputs(&k), &cfg, &BarrierSet::new(), &[det.e0])
                .map_err(|e| e.to_string())?;
            let r = detect(&agg, &det).map_err(|e| e.to_string())?;
            let first = r
                .first_flagged
                .map(|id| k.program.instrs[id].dst.clone().unwrap_or_default());
            let want = expect.get(k.name).copied().flatten();
            match want {
                Some(dst) => {
                    check(first.as_deref() == Some(dst), || {
                        format!("{}: first flagged {first:?}, want {dst}", k.name)
                    })?;
                    let id = r.first_flagged.unwrap();
                    let op = k.program.instrs[id].op;
                    lines.push(format!("{} -> {id} ({} {dst})", k.name, op.mnemonic()));
                }
                None => {
                    check(r.flagged.is_empty(), || format!("{}: flagged {:?}", k.name, r.flagged))?;
                    lines.push(format!("{} -> none", k.name));
                }
            }
        }
        Ok(lines.join("; "))
    })();
    verdict(5, "detection on 1000-point grids", outcome);
}

#[test]
fn criterion_06_fix_efficacy() {
    let outcome = (|| {
        let k = kernel("exp_kernel").map_err(|e| e.to_string())?;
        let inputs = grid_inputs(&k);
        let cfg = EngineConfig::default();
        let fix = fix_iteratively(&k.program, &inputs, &cfg, &DetectionConfig::default()).map_err(|e| e.to_string())?;
        let oracle = OracleConfig::default();
        let rows = evaluate(&k, &inputs, &cfg, &fix.barriers, &oracle).map_err(|e| e.to_string())?;
        let t = summarize(k.name, &rows, oracle.precision).map_err(|e| e.to_string())?;
        let mp = t.avg_mp.mean.clone().ok_or("no finite MP errors")?;
        let lp = t.avg_lp.mean.clone().ok_or("no finite LP errors")?;
        let hp = t.avg_hp.mean.clone().ok_or("no finite HP errors")?;
        let short = |v: &MpFloat| v.to_scientific(3).to_e_notation();
        let summary = format!(
            "barriers {:?}, P[M>=H] {:.2}%, AVG_MP {}, AVG_LP {}, AVG_HP {}",
            fix.barriers.sorted(),
            t.m_ge_h.percent(),
            short(&mp),
            short(&lp),
            short(&hp)
        );
        check(t.m_ge_h.count == t.m_ge_h.total && t.m_ge_h.total == 1000, || {
            summary.clone()
        })?;
        check(mp.compare(&lp) == Some(Ordering::Less), || summary.clone())?;
        check(mp.compare(&hp) == Some(Ordering::Less), || summary.clone())?;
        let scaled = mp.mul(&MpFloat::from_u64(1000, 16), oracle.precision);
        check(hp.compare(&scaled) == Some(Ordering::Greater), || summary.clone())?;
        Ok(summary)
    })();
    verdict(6, "fixing efficacy on exp_kernel", outcome);
}

/// pi from the BBP series, independent of the oracle's own constant.
fn bbp_pi(bits: u32) -> MpFloat {
    let w = bits + 32;
    let mut sum = MpFloat::zero(w);
    let frac = |n: u64, d: u64| MpFloat::from_u64(n, 64).div(&MpFloat::from_u64(d, 64), w);
    for k in 0..(bits as u64 / 4 + 4) {
        let t = frac(4, 8 * k + 1)
            .sub(&frac(2, 8 * k + 4), w)
            .sub(&frac(1, 8 * k + 5), w)
            .sub(&frac(1, 8 * k + 6), w)
            .mul_pow2(-4 * k as i64);
        sum = sum.add(&t, w);
    }
    sum
}

#[test]
fn criterion_07_oracle() {
    let outcome = (|| {
        let o = OracleConfig::default();
        check(o.precision == 256, || format!("default precision {}", o.precision))?;
        let e = |s: &str| -> Result<MpFloat, String> {
            let expr: Expr = s
                .parse()
                .map_err(|e: psop_core::transcendental::OracleError| e.to_string())?;
            o.eval_expr(&expr).map_err(|e| e.to_string())
        };
        let v = e("exp(-0.0277)")?.to_decimal_string(30);
        check(v == "0.972680127073139846902979085281", || {
            format!("exp(-0.0277) = {v}")
        })?;
        let d = e("sub(pow(20, 65), exp(mul(65, log(20))))")?;
        check(d.is_zero(), || format!("pow identity residual {d}"))?;

        let bound = MpFloat::one(8).mul_pow2(-252);
        let wide = 1024;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = MpFloat::zero(wide);
        let mut note = |r: MpFloat| {
            let r = r.abs();
            if r.compare(&worst) == Some(Ordering::Greater) {
                worst = r;
            }
        };
        for _ in 0..40 {
            let x = MpFloat::from_f64(rng.gen_range(-20.0..20.0));
            let s = o.sin(&x).map_err(|e| e.to_string())?;
            let c = o.cos(&x).map_err(|e| e.to_string())?;
            note(s.mul(&s, wide).add(&c.mul(&c, wide), wide).sub(&MpFloat::one(2), wide));
            let l = o
                .ln(&o.exp(&x).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let scale = x.abs().compare(&MpFloat::one(2)).map_or(MpFloat::one(2), |ord| {
                if ord == Ordering::Greater {
                    x.abs()
                } else {
                    MpFloat::one(2)
                }
            });
            note(l.sub(&x, wide).div(&scale, wide));
            let a = o
                .eval(Function::Exp2, std::slice::from_ref(&x))
                .map_err(|e| e.to_string())?;
            let ln2 = o.ln(&MpFloat::from_u64(2, 8)).map_err(|e| e.to_string())?;
            let b = o.exp(&x.mul(&ln2, o.precision)).map_err(|e| e.to_string())?;
            note(relative_error(&a, &b, wide));
        }
        check(worst.compare(&bound) == Some(Ordering::Less), || {
            format!("identity residual {}", worst.to_scientific(5).to_e_notation())
        })?;
        let pi = o.pi();
        let bbp = bbp_pi(o.precision);
        let diff = relative_error(&bbp, &pi, wide);
        check(
            diff.compare(&MpFloat::one(2).mul_pow2(-255)) != Some(Ordering::Greater),
            || format!("pi differs from BBP by {diff}"),
        )?;
        Ok(format!(
            "exp(-0.0277) = {v}; pow identity 0; worst identity residual {}",
            worst.to_scientific(3).to_e_notation()
        ))
    })();
    verdict(7, "oracle standards", outcome);
}

fn random_inputs(k: &Kernel, n: usize, seed: u64) -> Vec<Vec<MpFloat>> {
    let lo: f64 = k.domain.lo.parse().expect("domain bound");
    let hi: f64 = k.domain.hi.parse().expect("domain bound");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| vec![MpFloat::from_f64(rng.gen_range(lo..hi))]).collect()
}

#[test]
fn criterion_08_engine_invariants() {
    let outcome = (|| {
        let same = EngineConfig {
            p_shadow: 53,
            ..EngineConfig::default()
        };
        let cfg = EngineConfig::default();
        let mut samples = 0usize;
        for k in builtin_kernels() {
            let inputs: Vec<_> = if k.name == "accum_kernel" {
                grid_inputs(&k).into_iter().step_by(10).collect()
            } else {
                grid_inputs(&k)
            };
            for r in run_batch(&k.program, &inputs, &same, &BarrierSet::new()).map_err(|e| e.to_string())? {
                let t = r.map_err(|e| e.to_string())?;
                samples += t.samples.len();
                if let Some(s) = t.samples.iter().find(|s| !s.rel_err.is_zero()) {
                    return Err(format!(
                        "{}: run {} instruction {} error {}",
                        k.name, t.run, s.instr, s.rel_err
                    ));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for k in builtin_kernels() {
            let inputs = random_inputs(&k, 100, 80);
            let all = BarrierSet::all_float(&k.program);
            let some: BarrierSet = all.sorted().into_iter().filter(|_| rng.gen_bool(0.3)).collect();
            let plain = run_batch(&k.program, &inputs, &cfg, &BarrierSet::new()).map_err(|e| e.to_string())?;
            for barriers in [&all, &some] {
                let fixed = run_batch(&k.program, &inputs, &cfg, barriers).map_err(|e| e.to_string())?;
                for (a, b) in plain.iter().zip(&fixed) {
                    let (a, b) = (
                        a.as_ref().map_err(|e| e.to_string())?,
                        b.as_ref().map_err(|e| e.to_string())?,
                    );
                    check(
                        a.output.original == b.output.original && a.branches == b.branches,
                        || {
                            format!(
                                "{}: original lane changed by barriers {:?} on run {}",
                                k.name,
                                barriers.sorted(),
                                a.run
                            )
                        },
                    )?;
                }
            }
            let again = run_batch(&k.program, &inputs, &cfg, &some).map_err(|e| e.to_string())?;
            let first = run_batch(&k.program, &inputs, &cfg, &some).map_err(|e| e.to_string())?;
            let strip = |v: Vec<Result<RunTrace, _>>| {
                v.into_iter()
                    .map(|r| r.map_err(|e: psop_core::engine::EngineError| e.to_string()))
                    .collect::<Result<Vec<_>, _>>()
            };
            check(strip(again)? == strip(first)?, || {
                format!("{}: repeated batches differ", k.name)
            })?;
            let engine = Engine::new(&k.program, &cfg).map_err(|e| e.to_string())?;
            let dump = |run: usize| -> Result<String, String> {
                let mut d = TraceDump::new(&cfg);
                engine
                    .run(&inputs[run], &some, run, &mut d)
                    .map_err(|e| e.to_string())?;
                Ok(d.text)
            };
            check(dump(0)? == dump(0)?, || {
                format!("{}: trace dump not reproducible", k.name)
            })?;
        }
        Ok(format!(
            "{samples} samples at equal precision all zero; barriers never touch the original lane; runs deterministic"
        ))
    })();
    verdict(8, "engine invariants", outcome);
}

#[test]
fn criterion_09_binary64_equivalence() {
    let outcome = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let operand = |rng: &mut ChaCha8Rng| -> f64 {
            match rng.gen_range(0..6) {
                // Any bit pattern: specials, subnormals, all exponents.
                0 => f64::from_bits(rng.gen()),
                // Subnormal.
                1 => f64::from_bits(rng.gen_range(1..1u64 << 52) | (u64::from(rng.gen::<bool>()) << 63)),
                // Near the overflow threshold.
                2 => {
                    rng.gen_range(1.0..2.0) * 2f64.powi(rng.gen_range(1000..1024)) * if rng.gen() { 1.0 } else { -1.0 }
                }
                // Near the underflow threshold.
                3 => rng.gen_range(1.0..2.0) * 2f64.powi(rng.gen_range(-1074..-1000)),
                // Ordinary magnitudes, often close together for cancellation.
                _ => rng.gen_range(-4.0..4.0) * 2f64.powi(rng.gen_range(-30..30)),
            }
        };
        type Reference = fn(f64, f64) -> f64;
        let ops: [(&str, Reference); 4] = [
            ("add", |a, b| a + b),
            ("sub", |a, b| a - b),
            ("mul", |a, b| a * b),
            ("div", |a, b| a / b),
        ];
        let mut counts = Vec::new();
        for (name, reference) in ops {
            let mut mismatches = 0;
            for _ in 0..100_000 {
                let a = operand(&mut rng);
                let b = if rng.gen_bool(0.2) {
                    a * (1.0 + f64::EPSILON * rng.gen_range(-8.0..8.0))
                } else {
                    operand(&mut rng)
                };
                let (ma, mb) = (
                    MpFloat::from_binary64_bits(a.to_bits()),
                    MpFloat::from_binary64_bits(b.to_bits()),
                );
                let got = match name {
                    "add" => ma.add(&mb, Format::BINARY64),
                    "sub" => ma.sub(&mb, Format::BINARY64),
                    "mul" => ma.mul(&mb, Format::BINARY64),
                    _ => ma.div(&mb, Format::BINARY64),
                };
                let want = reference(a, b);
                let ok = match got.to_binary64_bits() {
                    Ok(bits) => bits == want.to_bits() || (want.is_nan() && got.is_nan()),
                    Err(_) => false,
                };
                if !ok {
                    mismatches += 1;
                }
            }
            check(mismatches == 0, || format!("{name}: {mismatches} mismatches"))?;
            counts.push(format!("{name} 100000"));
        }
        Ok(format!("{} operations bit-identical", counts.join(", ")))
    })();
    verdict(9, "binary64 equivalence", outcome);
}

#[test]
fn criterion_10_pattern_coverage() {
    let outcome = (|| {
        let kernels = builtin_kernels();
        let has = |p: Pattern| kernels.iter().any(|k| k.pattern == p || k.pattern == Pattern::Both);
        check(has(Pattern::MagicConstant) && has(Pattern::Union), || {
            "missing a pattern kernel".into()
        })?;
        check(kernels.iter().any(|k| k.pattern == Pattern::Control), || {
            "missing a control kernel".into()
        })?;
        Ok("per-function operation counts and precision/recall are not reproduced; magic-constant and union patterns are covered by the kernels checked in criterion 5".into())
    })();
    verdict(10, "scope of reproduction", outcome);
}

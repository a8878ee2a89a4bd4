use proptest::prelude::*;
use psop_core::corpus::builtin_kernels;
use psop_core::engine::{execute, run_batch, EngineConfig};
use psop_core::tac::{parse_annotated, parse_program, pretty_print, validate, BarrierSet, TacProgram};
use psop_mpfloat::{Format, MpFloat};

/// Straight-line program over `x`, `y` and two constants; returns the source
/// text and a native f64 evaluator for it.
#[derive(Clone, Debug)]
struct Straight {
    ops: Vec<(char, usize, usize)>,
}

const C0: f64 = 0.1;
const C1: f64 = 3.0;

impl Straight {
    fn source(&self) -> String {
        let mut s = String::from("const c0 = 0.1\nconst c1 = 3\n\nfunc gen(x, y) -> r\n");
        let mut names: Vec<String> = ["x", "y", "c0", "c1"].iter().map(|s| s.to_string()).collect();
        for (i, &(op, a, b)) in self.ops.iter().enumerate() {
            let dst = format!("t{i}");
            s.push_str(&format!(
                "  {dst} = {} {op} {}\n",
                names[a % names.len()],
                names[b % names.len()]
            ));
            names.push(dst);
        }
        s.push_str(&format!("  r = {} + 0\n  ret r\n", names.last().unwrap()));
        s
    }

    fn native(&self, x: f64, y: f64) -> f64 {
        let mut vals = vec![x, y, C0, C1];
        for &(op, a, b) in &self.ops {
            let (u, v) = (vals[a % vals.len()], vals[b % vals.len()]);
            vals.push(match op {
                '+' => u + v,
                '-' => u - v,
                '*' => u * v,
                _ => u / v,
            });
        }
        vals.last().unwrap() + 0.0
    }
}

fn straight() -> impl Strategy<Value = Straight> {
    prop::collection::vec(
        (prop::sample::select(vec!['+', '-', '*', '/']), 0usize..64, 0usize..64),
        1..12,
    )
    .prop_map(|ops| Straight { ops })
}

fn subset(prog: &TacProgram, mask: u64) -> BarrierSet {
    let mut b = BarrierSet::new();
    for id in prog.float_assignments() {
        if mask >> (id % 64) & 1 == 1 {
            b.insert(id);
        }
    }
    b
}

fn input(v: f64) -> MpFloat {
    MpFloat::from_f64(v).round_to(Format::BINARY64)
}

fn same(a: &MpFloat, b: f64) -> bool {
    if b.is_nan() {
        a.is_nan()
    } else {
        a.to_f64().to_bits() == b.to_bits()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn print_parse_round_trip(k in 0usize..6, mask in any::<u64>()) {
        let kernel = &builtin_kernels()[k];
        let barriers = subset(&kernel.program, mask);
        let text = pretty_print(&kernel.program, &barriers);
        let (back, back_barriers) = parse_annotated(&text).unwrap();
        prop_assert_eq!(&back, &kernel.program);
        prop_assert_eq!(back_barriers.sorted(), barriers.sorted());
        prop_assert_eq!(pretty_print(&back, &back_barriers), text);
    }

    /// Damaged sources either fail to parse or yield a program that
    /// validates and runs.
    #[test]
    fn mutated_sources_are_rejected_or_sound(k in 0usize..6, at in any::<prop::sample::Index>(), repl in "[a-z0-9=+*,() \n-]{0,3}", cut in 0usize..4) {
        let src = builtin_kernels()[k].source;
        let mut pos = at.index(src.len());
        while !src.is_char_boundary(pos) {
            pos -= 1;
        }
        let end = (pos + cut).min(src.len());
        let end = (end..=src.len()).find(|&e| src.is_char_boundary(e)).unwrap();
        let mutated = format!("{}{}{}", &src[..pos], repl, &src[end..]);
        if let Ok(prog) = parse_program(&mutated) {
            prop_assert!(validate(&prog).is_empty());
            let cfg = EngineConfig { max_steps: 100_000, ..EngineConfig::default() };
            let args = vec![input(0.5); prog.params.len()];
            let _ = execute(&prog, &args, &cfg, &BarrierSet::new());
        }
    }

    /// The original lane is native binary64 whatever the barriers are.
    #[test]
    fn original_lane_matches_native(p in straight(), x in -1e3f64..1e3, y in -1e3f64..1e3, mask in any::<u64>()) {
        let prog = parse_program(&p.source()).unwrap();
        let cfg = EngineConfig::default();
        let expected = p.native(x, y);
        for barriers in [BarrierSet::new(), subset(&prog, mask), BarrierSet::all_float(&prog)] {
            let trace = execute(&prog, &[input(x), input(y)], &cfg, &barriers).unwrap();
            prop_assert!(same(&trace.output.original, expected), "{} vs {}", trace.output.original.to_f64(), expected);
        }
    }

    /// With every operation barriered the shadow tracks the original, so no
    /// finite sample has error.
    #[test]
    fn all_barriers_zero_error(p in straight(), x in -1e3f64..1e3, y in -1e3f64..1e3) {
        let prog = parse_program(&p.source()).unwrap();
        let trace = execute(&prog, &[input(x), input(y)], &EngineConfig::default(), &BarrierSet::all_float(&prog)).unwrap();
        for s in &trace.samples {
            prop_assert!(s.rel_err.is_zero() || !trace.output.original.is_finite(), "instr {} err {}", s.instr, s.rel_err.to_f64());
        }
    }

    /// Without barriers on a program of exact operations the shadow lane is
    /// the exact result.
    #[test]
    fn shadow_exact_for_small_integers(a in -1000i32..1000, b in -1000i32..1000) {
        let src = "func f(x, y) -> r\n  s = x + y\n  p = s * x\n  r = p - y\n  ret r\n";
        let prog = parse_program(src).unwrap();
        let trace = execute(&prog, &[input(a.into()), input(b.into())], &EngineConfig::default(), &BarrierSet::new()).unwrap();
        let expected = (i64::from(a) + i64::from(b)) * i64::from(a) - i64::from(b);
        prop_assert_eq!(trace.output.shadow.unwrap().to_i64_exact(), Some(expected));
    }
}

#[test]
fn batch_is_deterministic() {
    let k = &builtin_kernels()[2];
    let inputs: Vec<Vec<MpFloat>> = k
        .default_grid(Format::BINARY64)
        .into_iter()
        .step_by(7)
        .map(|v| vec![v])
        .collect();
    let cfg = EngineConfig::default();
    let outputs = |_| -> Vec<(MpFloat, Option<MpFloat>)> {
        run_batch(&k.program, &inputs, &cfg, &BarrierSet::new())
            .unwrap()
            .into_iter()
            .map(|r| {
                let t = r.unwrap();
                (t.output.original, t.output.shadow)
            })
            .collect()
    };
    assert_eq!(outputs(0), outputs(1));
}

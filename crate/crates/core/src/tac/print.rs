use std::collections::BTreeMap;
use std::fmt::Write;

use super::{BarrierSet, ConstValue, Opcode, TacInstr, TacProgram};

fn operand_list(ins: &TacInstr) -> String {
    ins.srcs.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
}

fn plain(ins: &TacInstr) -> String {
    let args = operand_list(ins);
    match (ins.op, &ins.dst) {
        (Opcode::Ret, _) if args.is_empty() => "ret".to_string(),
        (Opcode::Ret, _) => format!("ret {args}"),
        (Opcode::Jmp, _) => format!("jmp {}", ins.label.as_deref().unwrap_or("")),
        (Opcode::Br, _) => format!("br {args}, {}", ins.label.as_deref().unwrap_or("")),
        (op, Some(dst)) => format!("{dst} = {} {args}", op.mnemonic()),
        (op, None) => format!("{} {args}", op.mnemonic()),
    }
}

/// Statement form used inside barrier annotations: infix where one exists.
fn statement(ins: &TacInstr) -> String {
    match (ins.op.infix(), &ins.dst) {
        (Some(sym), Some(dst)) => format!("{dst} = {} {sym} {};", ins.srcs[0], ins.srcs[1]),
        _ => format!("{};", plain(ins)),
    }
}

/// Renders a program in the text format. Instructions in `barriers` are
/// wrapped in `reducePrec` / `resumePrec` / `computeErr` calls, which
/// [`super::parse_annotated`] reads back as the same barrier set.
pub fn pretty_print(prog: &TacProgram, barriers: &BarrierSet) -> String {
    let mut out = String::new();
    for c in &prog.consts {
        match &c.value {
            ConstValue::Literal(text) => writeln!(out, "const {} = {text}", c.name),
            ConstValue::Words { lo, hi } => {
                writeln!(out, "const {} = {{{lo:#x}, {hi:#x}}}", c.name)
            }
        }
        .expect("write to string");
    }
    if !prog.consts.is_empty() {
        out.push('\n');
    }
    writeln!(
        out,
        "func {}({}) -> {}",
        prog.name,
        prog.params.join(", "),
        prog.return_var
    )
    .expect("write to string");
    let mut labels_at: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (name, &at) in &prog.labels {
        labels_at.entry(at).or_default().push(name);
    }
    for (i, ins) in prog.instrs.iter().enumerate() {
        for label in labels_at.get(&i).into_iter().flatten() {
            writeln!(out, "{label}:").expect("write to string");
        }
        if barriers.contains(ins.id) {
            let dst = ins.dst.as_deref().unwrap_or("_");
            let id = ins.id;
            writeln!(out, "  reducePrec(&{dst}, {id});").expect("write to string");
            writeln!(out, "  {}", statement(ins)).expect("write to string");
            writeln!(out, "  resumePrec(&{dst}, {id});").expect("write to string");
            writeln!(out, "  computeErr(\"{dst}\", &{dst}, {id});").expect("write to string");
        } else {
            writeln!(out, "  {}", plain(ins)).expect("write to string");
        }
    }
    for label in labels_at.get(&prog.instrs.len()).into_iter().flatten() {
        writeln!(out, "{label}:").expect("write to string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{parse_annotated, parse_program};
    use super::*;

    const LOOP: &str = "const tenth = 0.1\n\
                        const w = {0, 0x42180000}\n\
                        func f(x) -> s\n\
                        s = fmov x\n\
                        i = iconst 0\n\
                        top:\n\
                        s = s + tenth\n\
                        i = iadd i, 1\n\
                        c = icmp lt i, 10\n\
                        br c, top\n\
                        done:\n";

    #[test]
    fn plain_round_trip() {
        let p = parse_program(LOOP).unwrap();
        let text = pretty_print(&p, &BarrierSet::new());
        assert!(!text.contains("reducePrec"));
        assert_eq!(parse_program(&text).unwrap(), p);
    }

    #[test]
    fn barrier_form_round_trip() {
        let p = parse_program(LOOP).unwrap();
        let barriers: BarrierSet = [2].into_iter().collect();
        let text = pretty_print(&p, &barriers);
        assert!(text
            .contains("  reducePrec(&s, 2);\n  s = s + tenth;\n  resumePrec(&s, 2);\n  computeErr(\"s\", &s, 2);\n"));
        let (q, b) = parse_annotated(&text).unwrap();
        assert_eq!(q, p);
        assert_eq!(b, barriers);
    }
}

//! Canonical config text (the `Text()` direction).
//!
//! Layout: four-space indentation; a dict with more than one entry puts each
//! entry on its own line and closes on the last entry's line; a single-entry
//! dict stays inline; non-empty lists and tuples always span lines with a
//! trailing comma after every element.

use super::value::{ArchNode, ArchTree, ConfigValue};

const INDENT: &str = "    ";

pub fn render_config(tree: &ArchTree) -> String {
    let mut out = String::from("model = ");
    write_node(&mut out, tree.root(), 0);
    out.push('\n');
    out
}

/// Canonical multi-line rendering of a value at nesting depth zero.
pub fn render_value(value: &ConfigValue) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out
}

fn write_value(out: &mut String, value: &ConfigValue, depth: usize) {
    match value {
        ConfigValue::Node(n) => write_node(out, n, depth),
        ConfigValue::List(items) => write_seq(out, items, depth, '[', ']'),
        ConfigValue::Tuple(items) => write_seq(out, items, depth, '(', ')'),
        leaf => write_leaf(out, leaf),
    }
}

fn write_node(out: &mut String, node: &ArchNode, depth: usize) {
    match node.entries() {
        [] => out.push_str("dict()"),
        [(k, v)] => {
            out.push_str("dict(");
            out.push_str(k);
            out.push('=');
            write_value(out, v, depth);
            out.push(')');
        }
        entries => {
            out.push_str("dict(\n");
            for (i, (k, v)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push_str(",\n");
                }
                push_indent(out, depth + 1);
                out.push_str(k);
                out.push('=');
                write_value(out, v, depth + 1);
            }
            out.push(')');
        }
    }
}

fn write_seq(out: &mut String, items: &[ConfigValue], depth: usize, open: char, close: char) {
    out.push(open);
    if items.is_empty() {
        out.push(close);
        return;
    }
    out.push('\n');
    for item in items {
        push_indent(out, depth + 1);
        write_value(out, item, depth + 1);
        out.push_str(",\n");
    }
    push_indent(out, depth);
    out.push(close);
}

fn push_indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn write_leaf(out: &mut String, value: &ConfigValue) {
    match value {
        ConfigValue::Int(i) => out.push_str(&i.to_string()),
        ConfigValue::Float(f) => out.push_str(&python_float_repr(*f)),
        ConfigValue::Bool(true) => out.push_str("True"),
        ConfigValue::Bool(false) => out.push_str("False"),
        ConfigValue::None => out.push_str("None"),
        ConfigValue::Str(s) => write_str(out, s),
        _ => unreachable!("containers are not leaves"),
    }
}

fn write_str(out: &mut String, s: &str) {
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('\'');
}

/// Single-line rendering, e.g. `dict(type='Conv2d', kernel_size=(3, 3))`.
pub fn render_inline(value: &ConfigValue) -> String {
    let mut out = String::new();
    write_inline(&mut out, value);
    out
}

fn write_inline(out: &mut String, value: &ConfigValue) {
    match value {
        ConfigValue::Node(n) => {
            out.push_str("dict(");
            for (i, (k, v)) in n.entries().iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(k);
                out.push('=');
                write_inline(out, v);
            }
            out.push(')');
        }
        ConfigValue::List(items) => {
            out.push('[');
            write_inline_items(out, items);
            out.push(']');
        }
        ConfigValue::Tuple(items) => {
            out.push('(');
            write_inline_items(out, items);
            if items.len() == 1 {
                out.push(',');
            }
            out.push(')');
        }
        leaf => write_leaf(out, leaf),
    }
}

fn write_inline_items(out: &mut String, items: &[ConfigValue]) {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_inline(out, item);
    }
}

/// Formats a finite float the way Python's `repr` does: shortest round-trip
/// digits, positional notation for exponents in `[-4, 16)`, otherwise
/// scientific with a signed two-digit exponent.
pub fn python_float_repr(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    // `{:e}` yields the shortest round-trip digits, e.g. "1.5e-5".
    let sci = format!("{:e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("LowerExp always has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if (-4..16).contains(&exp) {
        let point = exp + 1;
        if point <= 0 {
            out.push_str("0.");
            for _ in 0..(-point) {
                out.push('0');
            }
            out.push_str(&digits);
        } else if (point as usize) >= digits.len() {
            out.push_str(&digits);
            for _ in 0..(point as usize - digits.len()) {
                out.push('0');
            }
            out.push_str(".0");
        } else {
            out.push_str(&digits[..point as usize]);
            out.push('.');
            out.push_str(&digits[point as usize..]);
        }
    } else {
        out.push_str(&digits[..1]);
        if digits.len() > 1 {
            out.push('.');
            out.push_str(&digits[1..]);
        }
        out.push('e');
        out.push(if exp < 0 { '-' } else { '+' });
        out.push_str(&format!("{:02}", exp.abs()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn float_repr_matches_python() {
        let cases = [
            (1e-5, "1e-05"),
            (0.1, "0.1"),
            (1.0, "1.0"),
            (0.15, "0.15"),
            (1e16, "1e+16"),
            (1e15, "1000000000000000.0"),
            (0.0001, "0.0001"),
            (0.00012, "0.00012"),
            (0.000012, "1.2e-05"),
            (-2.5, "-2.5"),
            (123.456, "123.456"),
            (1.5e300, "1.5e+300"),
            (-0.0, "-0.0"),
            (0.0, "0.0"),
        ];
        for (x, want) in cases {
            assert_eq!(python_float_repr(x), want, "{x}");
        }
    }

    #[test]
    fn two_entry_node_layout() {
        let t = parse_config("model = dict(type='X', a=0)").unwrap();
        assert_eq!(render_config(&t), "model = dict(\n    type='X',\n    a=0)\n");
    }

    #[test]
    fn inline_forms() {
        let t = parse_config("model = dict(type='X', a=(1,), b=[1, 'q'], c=dict())").unwrap();
        assert_eq!(
            render_inline(&ConfigValue::Node(t.root().clone())),
            "dict(type='X', a=(1,), b=[1, 'q'], c=dict())"
        );
    }

    #[test]
    fn escapes_round_trip() {
        let t = parse_config("model = dict(type='X', s='a\\'b\\\\c\\nd\"')").unwrap();
        let text = render_config(&t);
        assert_eq!(parse_config(&text).unwrap(), t);
    }
}

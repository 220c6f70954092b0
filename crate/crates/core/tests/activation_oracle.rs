//! Activation values and derivatives against a 60-digit mpmath table
//! (`tests/data/activation_oracle.csv`, generated by the script beside it).

use softremish::{ActivationKind, DerivativeOrder};

const TABLE: &str = include_str!("data/activation_oracle.csv");

/// Double precision: |got - want| <= tol * max(1, |want|).
const TOL_F64: [f64; 3] = [1e-13, 1e-12, 1e-10];
/// Single precision, same form.
const TOL_F32: [f64; 3] = [2e-6, 2e-6, 1e-4];

struct Row {
    kind: ActivationKind,
    x: f64,
    want: [f64; 3],
}

fn rows() -> Vec<Row> {
    TABLE
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 6, "malformed row {line}");
            let num = |s: &str| s.parse::<f64>().unwrap_or_else(|_| panic!("bad number {s}"));
            let kind = match f[0] {
                "relu" => ActivationKind::ReLU,
                "tanh" => ActivationKind::Tanh,
                "softplus" => ActivationKind::Softplus,
                "mish" => ActivationKind::Mish,
                "softremish" => ActivationKind::soft_remish(num(f[1])).unwrap(),
                other => panic!("unknown function {other}"),
            };
            Row { kind, x: num(f[2]), want: [num(f[3]), num(f[4]), num(f[5])] }
        })
        .collect()
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(1.0)
}

#[test]
fn table_covers_every_function() {
    let rows = rows();
    assert_eq!(rows.len(), 7 * 38);
    for kind in ActivationKind::ALL {
        assert!(rows.iter().any(|r| r.kind == kind), "{kind} missing");
    }
}

#[test]
fn double_precision_matches_table() {
    for r in rows() {
        for order in DerivativeOrder::ALL {
            let i = order.index() as usize;
            let got = r.kind.eval_order(order, r.x);
            assert!(within(got, r.want[i], TOL_F64[i]), "{} order {i} at {}: {got} vs {}", r.kind, r.x, r.want[i]);
        }
    }
}

#[test]
fn single_precision_matches_table() {
    for r in rows() {
        // Rows whose x is not exact in f32 would mostly measure input rounding.
        let xf = r.x as f32;
        if xf as f64 != r.x {
            continue;
        }
        for order in DerivativeOrder::ALL {
            let i = order.index() as usize;
            let got = r.kind.eval_order(order, xf) as f64;
            assert!(within(got, r.want[i], TOL_F32[i]), "{} f32 order {i} at {}: {got} vs {}", r.kind, r.x, r.want[i]);
        }
    }
}

#[test]
fn fused_slope_matches_table() {
    for r in rows() {
        let (v, d1) = r.kind.eval_with_d1(r.x);
        assert!(within(v, r.want[0], TOL_F64[0]));
        assert!(within(d1, r.want[1], TOL_F64[1]));
    }
}

#[test]
fn alpha_one_rows_equal_mish_rows() {
    let rows = rows();
    let mish: Vec<&Row> = rows.iter().filter(|r| r.kind == ActivationKind::Mish).collect();
    let srm1: Vec<&Row> = rows.iter().filter(|r| r.kind.alpha() == Some(1.0)).collect();
    assert_eq!(mish.len(), srm1.len());
    for (m, s) in mish.iter().zip(srm1) {
        assert_eq!(m.x, s.x);
        for i in 0..3 {
            assert!(within(m.want[i], s.want[i], 1e-20));
        }
        for order in DerivativeOrder::ALL {
            assert_eq!(ActivationKind::Mish.eval_order(order, m.x).to_bits(), s.kind.eval_order(order, m.x).to_bits());
        }
    }
}

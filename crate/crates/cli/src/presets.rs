//! Named experiment presets. A preset expands to a full config whose params
//! a user could have written by hand; the expansion is echoed into the run
//! manifest.

use serde_json::json;

pub const PRESET_NAMES: [&str; 6] = [
    "lln-default",
    "corollary-1.10",
    "corollary-1.11",
    "q1-rotation",
    "q1-doubling",
    "q2",
];

/// Expand a preset name to (experiment, params).
pub fn expand(name: &str) -> Option<(String, serde_json::Value)> {
    let v = match name {
        // counting-ratio ensemble at the default parameters
        "lln-default" => (
            "lln",
            json!({
                "u": {"family": "geometric", "alpha": 2},
                "target": {"a": 0.3, "placement": "anchored", "ell": 1, "c": 1},
                "window": {"n_min": 1000, "n_max": 100000},
                "seeds": 100
            }),
        ),
        // primes against symmetric targets of the stretched family:
        // dim ≈ 1 − a along the hitting set of ⟨α^{n^b} y⟩ < n^{-a}
        "corollary-1.10" => (
            "transverse",
            json!({
                "A": {"kind": "primes"},
                "u": {"family": "stretched", "alpha": 2, "b": 0.5, "delta": 0.5},
                "target": {"a": 0.2, "placement": "symmetric", "ell": 2, "c": 2, "n0": 32},
                "window": {"n_min": 1000, "n_max": 10000000},
                "seeds": 20
            }),
        ),
        // the ergodic face of the same stretched family in the 2a < b regime
        "corollary-1.11" => (
            "ergodic",
            json!({
                "u": {"family": "stretched", "alpha": 2, "b": 0.5, "delta": 0.5},
                "target": {"a": 0.2, "placement": "anchored", "ell": 1, "c": 1},
                "system": {"kind": "times_p", "p": 2},
                "observable": {"kind": "indicator", "pieces": [["0", "0.5"]]},
                "x": {"kind": "stream"},
                "m_grid": [100, 1000, 10000],
                "seeds": 8
            }),
        ),
        // u_n = n: the rotation-by-y obstruction (exploratory; violates the
        // sublacunary regime and the runner warns)
        "q1-rotation" => (
            "ergodic",
            json!({
                "u": {"family": "polynomial", "m": 1},
                "target": {"a": 0.3, "placement": "anchored", "ell": 1, "c": 1},
                "system": {"kind": "rotation", "theta": "y"},
                "observable": {"kind": "trig", "cos": [1]},
                "x": {"kind": "rational", "p": 0, "q": 1},
                "m_grid": [100, 1000, 10000],
                "seeds": 8,
                "delta": 1
            }),
        ),
        // u_n = n against the doubling map (exploratory)
        "q1-doubling" => (
            "ergodic",
            json!({
                "u": {"family": "polynomial", "m": 1},
                "target": {"a": 0.3, "placement": "anchored", "ell": 1, "c": 1},
                "system": {"kind": "times_p", "p": 2},
                "observable": {"kind": "indicator", "pieces": [["0", "0.5"]]},
                "x": {"kind": "stream"},
                "m_grid": [100, 1000, 10000],
                "seeds": 8,
                "delta": 1
            }),
        ),
        // u_n = n² against ×2 (exploratory)
        "q2" => (
            "ergodic",
            json!({
                "u": {"family": "polynomial", "m": 2},
                "target": {"a": 0.3, "placement": "anchored", "ell": 1, "c": 1},
                "system": {"kind": "times_p", "p": 2},
                "observable": {"kind": "indicator", "pieces": [["0", "0.5"]]},
                "x": {"kind": "stream"},
                "m_grid": [100, 1000, 10000],
                "seeds": 8,
                "delta": 1
            }),
        ),
        _ => return None,
    };
    Some((v.0.to_string(), v.1))
}

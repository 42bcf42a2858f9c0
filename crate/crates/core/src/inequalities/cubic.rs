use serde::{Deserialize, Serialize};

/// One root `gamma` of `(1+gamma)^3 - A (1+gamma)^2 + B = 0` with the
/// quantities the three-variable bound attaches to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicRoot {
    pub gamma: f64,
    pub theta: f64,
    pub psi: f64,
    /// Gate: `gamma` and `theta` both strictly inside (0, 1).
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicAnalysis {
    pub a_coef: f64,
    pub b_coef: f64,
    pub roots: Vec<CubicRoot>,
}

const GATE_SLACK: f64 = 1e-12;

impl CubicAnalysis {
    /// `d2 >= d3 > 0` are the two smallest diameters, `a` the margin.
    pub fn new(a: f64, d2: f64, d3: f64) -> Self {
        let a_coef = (5.0 * d2 - 2.0 * d3) / (2.0 * d2 - d3);
        let b_coef = (4.0 * d2 - a) / (2.0 * d2 - d3);
        let r = d2 / d3;
        let roots = real_cubic_roots(-a_coef, 0.0, b_coef)
            .into_iter()
            .map(|x| {
                let g = x - 1.0;
                let theta = 1.0 - a / (d3 * (1.0 - g * g)) + r * (1.0 - g) / (1.0 + g);
                let psi = g * g * (2.0 * r - 1.0) - 2.0 * g * (3.0 * r - 1.0)
                    + g / (1.0 + g) * (8.0 * r - 2.0 * a / d3);
                let open = |v: f64| v > GATE_SLACK && v < 1.0 - GATE_SLACK;
                CubicRoot {
                    gamma: g,
                    theta,
                    psi,
                    admissible: open(g) && open(theta) && psi.is_finite(),
                }
            })
            .collect();
        Self {
            a_coef,
            b_coef,
            roots,
        }
    }

    /// `max phi(gamma) psi(gamma)` over the roots; 0 when none is admissible.
    pub fn f2(&self) -> f64 {
        self.best().map_or(0.0, |r| r.psi.max(0.0))
    }

    pub fn best(&self) -> Option<&CubicRoot> {
        self.roots
            .iter()
            .filter(|r| r.admissible)
            .max_by(|x, y| x.psi.total_cmp(&y.psi))
    }

    /// Residual of the cubic at `gamma`.
    pub fn residual(&self, gamma: f64) -> f64 {
        let x = 1.0 + gamma;
        x * x * x - self.a_coef * x * x + self.b_coef
    }
}

/// Real roots of `x^3 + c2 x^2 + c1 x + c0`, ascending, deduplicated.
pub fn real_cubic_roots(c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    let shift = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2.powi(3) / 27.0 - c2 * c1 / 3.0 + c0;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let scale = (q / 2.0)
        .powi(2)
        .max((p / 3.0).abs().powi(3))
        .max(f64::MIN_POSITIVE);

    let mut ys = if disc > 1e-14 * scale {
        let s = disc.sqrt();
        vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt()]
    } else if p.abs() < 1e-300 {
        vec![(-q).cbrt()]
    } else {
        let rho = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * q) / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        (0..3)
            .map(|k| rho * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect()
    };

    let f = |x: f64| ((x + c2) * x + c1) * x + c0;
    let df = |x: f64| (3.0 * x + 2.0 * c2) * x + c1;
    let mut xs: Vec<f64> = ys
        .drain(..)
        .map(|y| {
            let mut x = y - shift;
            for _ in 0..3 {
                let d = df(x);
                if d == 0.0 {
                    break;
                }
                let step = f(x) / d;
                if !step.is_finite() {
                    break;
                }
                x -= step;
            }
            x
        })
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
    xs
}

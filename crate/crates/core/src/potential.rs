//! Radial potentials a(r) and the smooth cutoff η.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A continuous potential depending only on the distance to the pole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Constant { value: f64 },
    /// base + height·b((r − center)/width) with the C^∞ bump b(x) = e^{1 − 1/(1−x²)} on |x| < 1.
    Bump {
        base: f64,
        height: f64,
        center: f64,
        width: f64,
    },
    /// Piecewise-linear through (r_i, a_i), constant beyond the ends.
    Tabulated { r: Vec<f64>, a: Vec<f64> },
}

impl Potential {
    pub fn constant(value: f64) -> Self {
        Potential::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Potential::Constant { value } if !value.is_finite() => Err(Error::domain("potential must be finite")),
            Potential::Bump { width, .. } if !(*width > 0.0) => Err(Error::domain("bump width must be positive")),
            Potential::Tabulated { r, a } => {
                if r.is_empty() || r.len() != a.len() {
                    return Err(Error::domain("tabulated potential needs matching, non-empty columns"));
                }
                if !r.windows(2).all(|w| w[1] > w[0]) {
                    return Err(Error::domain("tabulated radii must be strictly increasing"));
                }
                if !a.iter().all(|v| v.is_finite()) {
                    return Err(Error::domain("tabulated potential must be finite"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match self {
            Potential::Constant { value } => *value,
            Potential::Bump {
                base,
                height,
                center,
                width,
            } => {
                let x = (r - center) / width;
                if x.abs() < 1.0 {
                    base + height * (1.0 - 1.0 / (1.0 - x * x)).exp()
                } else {
                    *base
                }
            }
            Potential::Tabulated { r: rs, a } => {
                if r <= rs[0] {
                    return a[0];
                }
                let last = rs.len() - 1;
                if r >= rs[last] {
                    return a[last];
                }
                let k = rs.partition_point(|&x| x <= r) - 1;
                let t = (r - rs[k]) / (rs[k + 1] - rs[k]);
                a[k] + t * (a[k + 1] - a[k])
            }
        }
    }

    /// a(x₀)
    pub fn at_pole(&self) -> f64 {
        self.value(0.0)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Potential::Constant { .. })
    }
}

/// η ≡ 1 on [0, ρ], ≡ 0 on [2ρ, ∞), quintic smoothstep in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub rho: f64,
}

impl Cutoff {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::domain(format!("cutoff radius must be positive, got {rho}")));
        }
        Ok(Self { rho })
    }

    /// (η, η', η'') at r.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        let rho = self.rho;
        if r <= rho {
            return (1.0, 0.0, 0.0);
        }
        if r >= 2.0 * rho {
            return (0.0, 0.0, 0.0);
        }
        let x = (r - rho) / rho;
        let x2 = x * x;
        let s = x2 * x * (10.0 - 15.0 * x + 6.0 * x2);
        let ds = 30.0 * x2 * (1.0 - x) * (1.0 - x);
        let d2s = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
        (1.0 - s, -ds / rho, -d2s / (rho * rho))
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cutoff_shape() {
        let c = Cutoff::new(0.4).unwrap();
        assert_eq!(c.value(0.1), 1.0);
        assert_eq!(c.value(0.9), 0.0);
        assert_relative_eq!(c.value(0.6), 0.5, max_relative = 1e-15);
        for k in 1..100 {
            let r = 0.4 + 0.4 * k as f64 / 100.0;
            let (e, d, dd) = c.eval(r);
            assert!((0.0..=1.0).contains(&e));
            let h = 1e-6;
            assert_relative_eq!(d, (c.value(r + h) - c.value(r - h)) / (2.0 * h), epsilon = 1e-7);
            assert_relative_eq!(dd, (c.eval(r + h).1 - c.eval(r - h).1) / (2.0 * h), epsilon = 1e-5);
        }
        // C² across the junctions
        assert!(c.eval(0.4 + 1e-9).1.abs() < 1e-12);
        assert!(c.eval(0.8 - 1e-9).1.abs() < 1e-12);
    }

    #[test]
    fn potentials() {
        let p = Potential::Bump {
            base: 0.5,
            height: 0.2,
            center: 2.5,
            width: 0.3,
        };
        assert_eq!(p.at_pole(), 0.5);
        assert_relative_eq!(p.value(2.5), 0.7);
        let t = Potential::Tabulated {
            r: vec![0.0, 1.0, 2.0],
            a: vec![1.0, 3.0, 2.0],
        };
        t.validate().unwrap();
        assert_relative_eq!(t.value(0.5), 2.0);
        assert_relative_eq!(t.value(1.5), 2.5);
        assert_eq!(t.value(5.0), 2.0);
        let bad = Potential::Tabulated {
            r: vec![1.0, 0.0],
            a: vec![1.0, 1.0],
        };
        assert!(bad.validate().is_err());
    }
}

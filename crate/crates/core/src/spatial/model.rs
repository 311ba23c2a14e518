use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::spatial::field::{FieldMatrix, SeparableField};

/// `dx = f(x)dt + G(x)dv + ρ(x)dw`, `dy = h(x)dt + dw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub name: String,
    pub f: Vec<SeparableField>,
    pub h: Vec<SeparableField>,
    pub g: FieldMatrix,
    pub rho: FieldMatrix,
}

impl SignalModel {
    pub fn new(
        name: impl Into<String>,
        f: Vec<SeparableField>,
        h: Vec<SeparableField>,
        g: FieldMatrix,
        rho: FieldMatrix,
    ) -> Result<Self> {
        let d = f.len();
        if d == 0 || h.len() != d || g.dim() != d || rho.dim() != d {
            return Err(Error::ShapeMismatch(format!(
                "model components disagree: f {}, h {}, G {}, rho {}",
                f.len(),
                h.len(),
                g.dim(),
                rho.dim()
            )));
        }
        if f.iter().chain(&h).any(|c| c.dim() != d) {
            return Err(Error::ShapeMismatch("field dimension differs from model dimension".into()));
        }
        Ok(Self {
            name: name.into(),
            f,
            h,
            g,
            rho,
        })
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    /// `GGᵀ`
    pub fn gg(&self) -> FieldMatrix {
        self.g.outer_self()
    }

    /// `ρρᵀ`
    pub fn rr(&self) -> FieldMatrix {
        self.rho.outer_self()
    }

    /// `GGᵀ + ρρᵀ`
    pub fn sigma(&self) -> FieldMatrix {
        self.gg().add(&self.rr())
    }

    /// Whether both diffusion products are symbolically diagonal.
    pub fn is_diagonal(&self) -> bool {
        self.gg().is_diagonal() && self.rr().is_diagonal()
    }

    pub fn div_f(&self) -> SeparableField {
        self.f
            .iter()
            .enumerate()
            .fold(SeparableField::zero(self.dim()), |acc, (k, fk)| acc.add(&fk.partial(k)))
    }

    /// `h_k − ∇·(ρ_{·k})`
    pub fn m_k(&self, k: usize) -> SeparableField {
        self.h[k].sub(&self.rho.column_divergence(k))
    }

    /// Analytic Jacobian entries `∂f_i/∂x_j`, row-major.
    pub fn jacobian_f(&self) -> Vec<SeparableField> {
        jacobian(&self.f)
    }

    pub fn jacobian_h(&self) -> Vec<SeparableField> {
        jacobian(&self.h)
    }

    pub fn eval_f(&self, x: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.f) {
            *o = f.eval(x);
        }
    }

    pub fn eval_h(&self, x: &[f64], out: &mut [f64]) {
        for (o, h) in out.iter_mut().zip(&self.h) {
            *o = h.eval(x);
        }
    }

    /// Hex SHA-256 of the canonical JSON form (used to key operator caches).
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("model serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Image of the model under the reflection `x ↦ −x`, `y ↦ y`.
    ///
    /// The reflected density solves the same filtering problem for this model;
    /// when `f`, `ρ` are odd and `h`, `G` even it coincides with the original.
    pub fn is_reflection_symmetric(&self) -> bool {
        let d = self.dim();
        let probes: Vec<Vec<f64>> = (0..7)
            .map(|s| (0..d).map(|k| 0.37 * (s as f64 + 1.0) - 0.61 * k as f64).collect())
            .collect();
        probes.iter().all(|x| {
            let nx: Vec<f64> = x.iter().map(|v| -v).collect();
            let odd = |a: &SeparableField| (a.eval(x) + a.eval(&nx)).abs() < 1e-12;
            let even = |a: &SeparableField| (a.eval(x) - a.eval(&nx)).abs() < 1e-12;
            self.f.iter().all(odd)
                && self.h.iter().all(even)
                && (0..d).all(|i| {
                    (0..d).all(|j| odd(self.rho.get(i, j)) && even(self.g.get(i, j)))
                })
        })
    }

    /// Cubic sensor: `f = A_d x + sin(1.5x)`, `G = I/√5`, `ρ = (√2/5) I`, `h = x³`.
    pub fn cubic_sensor(d: usize) -> Self {
        let f = (0..d)
            .map(|i| {
                let mut fi = SeparableField::monomial(d, i, 1, -0.8)
                    .add(&SeparableField::sine(d, i, 1.5, 0.0, 1.0));
                if i > 0 {
                    fi = fi.add(&SeparableField::monomial(d, i - 1, 1, -0.1));
                }
                fi
            })
            .collect();
        let h = (0..d).map(|i| SeparableField::monomial(d, i, 3, 1.0)).collect();
        Self::new(
            format!("cubic{d}"),
            f,
            h,
            FieldMatrix::scaled_identity(d, 1.0 / 5f64.sqrt()),
            FieldMatrix::scaled_identity(d, 2f64.sqrt() / 5.0),
        )
        .expect("consistent preset")
    }

    /// Four-dimensional bimodal example with state-dependent correlation.
    pub fn multimode() -> Self {
        let d = 4;
        let a = [0.5, 0.6, 0.8, 0.5];
        let f = (0..d)
            .map(|i| {
                let mut fi = SeparableField::sine(d, i, 1.0, 0.0, a[i]);
                if i + 1 < d {
                    fi = fi.add(&SeparableField::sine(d, i + 1, 1.0, 0.0, 0.2));
                }
                fi
            })
            .collect();
        let h = (0..d)
            .map(|i| {
                SeparableField::monomial(d, i, 2, 0.2).add(&SeparableField::cosine(d, i, 0.6, 1.0))
            })
            .collect();
        let c = 1.0 / (5.0 * 10f64.sqrt());
        let rho = FieldMatrix::diagonal((0..d).map(|i| SeparableField::monomial(d, i, 1, c)).collect());
        Self::new(
            "multimode",
            f,
            h,
            FieldMatrix::scaled_identity(d, 30f64.sqrt() / 10.0),
            rho,
        )
        .expect("consistent preset")
    }

    /// Rank study operator: constant orthogonal `G` (a rotation), `ρ = diag(x)`, `f = h = 0`.
    pub fn rank_study(d: usize) -> Self {
        // product of Givens rotations by a fixed angle on neighbouring pairs
        let theta: f64 = 0.3;
        let mut q = vec![0.0; d * d];
        for i in 0..d {
            q[i * d + i] = 1.0;
        }
        for p in 0..d.saturating_sub(1) {
            let (c, s) = (theta.cos(), theta.sin());
            for row in 0..d {
                let (a, b) = (q[row * d + p], q[row * d + p + 1]);
                q[row * d + p] = c * a - s * b;
                q[row * d + p + 1] = s * a + c * b;
            }
        }
        let g = FieldMatrix::constant(d, &q).expect("square");
        let rho = FieldMatrix::diagonal((0..d).map(|i| SeparableField::monomial(d, i, 1, 1.0)).collect());
        Self::new(
            format!("rank{d}"),
            vec![SeparableField::zero(d); d],
            vec![SeparableField::zero(d); d],
            g,
            rho,
        )
        .expect("consistent preset")
    }

    /// Scalar linear-Gaussian model `dx = a x dt + g dv + r dw`, `dy = c x dt + dw`.
    pub fn linear_1d(a: f64, g: f64, r: f64, c: f64) -> Self {
        Self::new(
            "linear1",
            vec![SeparableField::monomial(1, 0, 1, a)],
            vec![SeparableField::monomial(1, 0, 1, c)],
            FieldMatrix::scaled_identity(1, g),
            FieldMatrix::scaled_identity(1, r),
        )
        .expect("consistent preset")
    }

    /// Smooth bounded scalar model used by the convergence studies.
    pub fn smooth_1d() -> Self {
        Self::new(
            "smooth1",
            vec![SeparableField::sine(1, 0, 1.0, 0.0, -0.5)
                .add(&SeparableField::monomial(1, 0, 1, -0.3))],
            vec![SeparableField::sine(1, 0, 1.0, 0.0, 1.0)],
            FieldMatrix::scaled_identity(1, 0.6),
            FieldMatrix::diagonal(vec![SeparableField::constant(1, 0.3)
                .add(&SeparableField::cosine(1, 0, 1.0, 0.1))]),
        )
        .expect("consistent preset")
    }

    /// Coupled two-dimensional counterpart of [`SignalModel::smooth_1d`]; the
    /// cross terms give the density genuine TT rank.
    pub fn smooth_2d() -> Self {
        let d = 2;
        let f = vec![
            SeparableField::sine(d, 0, 1.0, 0.0, -0.5)
                .add(&SeparableField::monomial(d, 0, 1, -0.3))
                .add(&SeparableField::sine(d, 1, 1.0, 0.0, 0.3)),
            SeparableField::sine(d, 1, 1.0, 0.0, -0.5)
                .add(&SeparableField::monomial(d, 1, 1, -0.3))
                .add(&SeparableField::cosine(d, 0, 1.0, 0.3)),
        ];
        let h = vec![
            SeparableField::sine(d, 0, 1.0, 0.0, 1.0),
            SeparableField::sine(d, 1, 1.0, 0.0, 1.0).add(&SeparableField::monomial(d, 0, 1, 0.2)),
        ];
        let rho = FieldMatrix::diagonal(
            (0..d)
                .map(|k| SeparableField::constant(d, 0.3).add(&SeparableField::cosine(d, k, 1.0, 0.1)))
                .collect(),
        );
        Self::new("smooth2", f, h, FieldMatrix::scaled_identity(d, 0.6), rho).expect("consistent preset")
    }
}

fn jacobian(fields: &[SeparableField]) -> Vec<SeparableField> {
    let d = fields.len();
    let mut out = Vec::with_capacity(d * d);
    for fi in fields {
        for j in 0..d {
            out.push(fi.partial(j));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_preset_matches_definition() {
        let m = SignalModel::cubic_sensor(3);
        let x = [0.3, -0.5, 1.1];
        let mut f = [0.0; 3];
        m.eval_f(&x, &mut f);
        let expect1 = -0.8 * x[1] - 0.1 * x[0] + (1.5 * x[1]).sin();
        assert!((f[1] - expect1).abs() < 1e-14);
        assert!(m.is_diagonal());
        let div: f64 = -2.4 + x.iter().map(|v| 1.5 * (1.5 * v).cos()).sum::<f64>();
        assert!((m.div_f().eval(&x) - div).abs() < 1e-13);
    }

    #[test]
    fn multimode_is_reflection_symmetric() {
        let m = SignalModel::multimode();
        assert!(m.is_reflection_symmetric());
        assert!(!SignalModel::cubic_sensor(2).is_reflection_symmetric());
        let c = 1.0 / (5.0 * 10f64.sqrt());
        assert!((m.m_k(2).eval(&[0.0, 0.0, 1.0, 0.0]) - (0.2 + 0.6f64.cos() - c)).abs() < 1e-14);
    }

    #[test]
    fn rotation_gives_identity_diffusion() {
        let m = SignalModel::rank_study(4);
        let gg = m.gg();
        assert!(gg.is_diagonal());
        for i in 0..4 {
            assert!((gg.get(i, i).eval(&[0.0; 4]) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn hash_is_stable_and_discriminating() {
        assert_eq!(SignalModel::multimode().hash(), SignalModel::multimode().hash());
        assert_ne!(SignalModel::cubic_sensor(2).hash(), SignalModel::cubic_sensor(3).hash());
    }
}

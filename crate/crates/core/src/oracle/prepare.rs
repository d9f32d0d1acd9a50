//! Gaussian state → density matrix: `ρ = D U_s (⊗ρ_{ν_k}) U_s† D†`, with the
//! symplectic `s` lifted through its Bloch-Messiah factors `O₁ Z O₂`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{FockDensity, FockSpace, TRACE_TOL};
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::linalg::{self, omega, CMatrix};

/// Extra levels per mode carried during preparation and cut afterwards.
pub const DEFAULT_PAD: usize = 12;
/// Thermal product states below this population are dropped.
const NEGLIGIBLE: f64 = 1e-20;

/// `s = o1 · diag(z_1, 1/z_1, …) · o2` with passive `o1`, `o2` and `z_k ≥ 1`.
#[derive(Debug, Clone)]
pub struct BlochMessiah {
    pub o1: DMatrix<f64>,
    pub z: Vec<f64>,
    pub o2: DMatrix<f64>,
}

impl BlochMessiah {
    pub fn squeeze_matrix(&self) -> DMatrix<f64> {
        let d = 2 * self.z.len();
        DMatrix::from_fn(d, d, |i, j| {
            if i != j {
                0.0
            } else if i % 2 == 0 {
                self.z[i / 2]
            } else {
                1.0 / self.z[i / 2]
            }
        })
    }
}

pub fn bloch_messiah(s: &DMatrix<f64>) -> BlochMessiah {
    let d = s.nrows();
    let n = d / 2;
    let p = linalg::sqrt_psd(&(s.transpose() * s));
    let o = s * p.clone().try_inverse().expect("symplectic matrices are invertible");
    let eig = p.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let wt = omega(n).transpose();

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(d);
    let orth = |v: &mut DVector<f64>, basis: &[DVector<f64>]| {
        for _ in 0..2 {
            for b in basis {
                let c = b.dot(v);
                *v -= b * c;
            }
        }
    };
    for &idx in &order {
        if basis.len() == d {
            break;
        }
        let mut v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        orth(&mut v, &basis);
        let norm = v.norm();
        if norm < 0.5 {
            continue;
        }
        v /= norm;
        let mut w = &wt * &v;
        orth(&mut w, &basis);
        w /= w.norm();
        basis.push(v);
        basis.push(w);
    }
    let o2t = DMatrix::from_columns(&basis);
    let z = (0..n).map(|k| basis[2 * k].dot(&(&p * &basis[2 * k]))).collect();
    let o2 = o2t.transpose();
    let o1 = o * &o2t;
    BlochMessiah { o1, z, o2 }
}

fn thermal_populations(nu: f64, c: usize) -> Vec<f64> {
    let nbar = ((nu - 1.0) / 2.0).max(0.0);
    let ratio = nbar / (1.0 + nbar);
    (0..c).map(|m| ratio.powi(m as i32) / (1.0 + nbar)).collect()
}

/// `exp(G)` for a single-mode generator built from `a` on `c` levels.
fn single_mode_unitary(c: usize, gen: impl Fn(&CMatrix, &CMatrix) -> CMatrix) -> CMatrix {
    let a = CMatrix::from_fn(c, c, |i, j| {
        if j == i + 1 {
            Complex64::new((j as f64).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let ad = a.adjoint();
    gen(&a, &ad).exp()
}

/// `S` with `S† R S = diag(e^r, e^{−r}) R`: `exp(r/2 (a†² − a²))`.
fn squeeze_unitary(c: usize, r: f64) -> CMatrix {
    single_mode_unitary(c, |a, ad| (ad * ad - a * a) * Complex64::new(0.5 * r, 0.0))
}

/// `D(α) = exp(α a† − α* a)`.
fn displacement_unitary(c: usize, alpha: Complex64) -> CMatrix {
    single_mode_unitary(c, |a, ad| ad * alpha - a * alpha.conj())
}

/// `u` acting on the digit of `mode`, applied to the columns of `w`.
pub(crate) fn left_local(w: &CMatrix, u: &CMatrix, space: FockSpace, mode: usize) -> CMatrix {
    let d = space.dim();
    let c = space.cutoff;
    let s = space.stride(mode);
    let occ: Vec<usize> = (0..d).map(|i| space.occupation(i, mode)).collect();
    let mut out = CMatrix::zeros(d, w.ncols());
    for j in 0..w.ncols() {
        let col = w.column(j);
        let src = col.as_slice();
        let dst = out.column_mut(j);
        for (i, o) in dst.into_iter().enumerate() {
            let ni = occ[i];
            let base = i - ni * s;
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..c {
                acc += u[(ni, m)] * src[base + m * s];
            }
            *o = acc;
        }
    }
    out
}

/// Passive unitary with `V† a V = U a` for the `n×n` unitary `U`.
struct PassiveLift {
    blocks: Vec<(Vec<usize>, CMatrix)>,
}

impl PassiveLift {
    fn new(u: &CMatrix, space: FockSpace) -> Self {
        let n = space.modes;
        let (q, t) = u.clone().schur().unpack();
        let logd = CMatrix::from_fn(n, n, |i, j| if i == j { t[(i, i)].ln() } else { Complex64::new(0.0, 0.0) });
        let g = &q * logd * q.adjoint();

        let d = space.dim();
        let max_total = n * (space.cutoff - 1);
        let mut sectors: Vec<Vec<usize>> = vec![Vec::new(); max_total + 1];
        for i in 0..d {
            sectors[space.total(i)].push(i);
        }
        let blocks = sectors
            .into_iter()
            .filter(|s| !s.is_empty())
            .map(|idx| {
                let pos = |i: usize| idx.iter().position(|&x| x == i);
                let mut b = CMatrix::zeros(idx.len(), idx.len());
                for (col, &i) in idx.iter().enumerate() {
                    for k in 0..n {
                        for l in 0..n {
                            // a_k† a_l |i⟩
                            let nl = space.occupation(i, l);
                            if nl == 0 {
                                continue;
                            }
                            if k == l {
                                b[(col, col)] += g[(k, k)] * nl as f64;
                                continue;
                            }
                            let nk = space.occupation(i, k);
                            if nk + 1 >= space.cutoff {
                                continue;
                            }
                            let target = i + space.stride(k) - space.stride(l);
                            let amp = ((nk + 1) as f64 * nl as f64).sqrt();
                            if let Some(row) = pos(target) {
                                b[(row, col)] += g[(k, l)] * amp;
                            }
                        }
                    }
                }
                (idx, b.exp())
            })
            .collect();
        Self { blocks }
    }

    fn left(&self, w: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(w.nrows(), w.ncols());
        for (idx, v) in &self.blocks {
            let sub = w.select_rows(idx);
            let moved = v * sub;
            for (r, &i) in idx.iter().enumerate() {
                out.row_mut(i).copy_from(&moved.row(r));
            }
        }
        out
    }
}

/// The `n×n` unitary `U = X − iY` of a passive symplectic with 2×2 blocks
/// `[[X_kl, Y_kl], [−Y_kl, X_kl]]`.
fn passive_unitary(o: &DMatrix<f64>) -> CMatrix {
    let n = o.nrows() / 2;
    CMatrix::from_fn(n, n, |k, l| Complex64::new(o[(2 * k, 2 * l)], -o[(2 * k, 2 * l + 1)]))
}

fn is_identity(o: &DMatrix<f64>) -> bool {
    (o - DMatrix::identity(o.nrows(), o.ncols())).amax() < 1e-14
}

pub fn state_to_fock(state: &GaussianState, cutoff: usize) -> Result<FockDensity> {
    state_to_fock_with(state, cutoff, DEFAULT_PAD, TRACE_TOL)
}

pub fn state_to_fock_with(state: &GaussianState, cutoff: usize, pad: usize, tol: f64) -> Result<FockDensity> {
    let n = state.n_modes();
    if cutoff < 4 {
        return Err(Error::Shape(format!("cutoff {cutoff} is below the minimum of 4")));
    }
    if n > 2 {
        return Err(Error::Shape(format!("the Fock oracle handles at most 2 modes, got {n}")));
    }
    let cw = cutoff + pad;
    let work = FockSpace::new(cw, n);
    let w = state.williamson()?;
    let bm = bloch_messiah(&w.s);

    // ρ = W W†, starting from the square roots of the thermal populations.
    let pops: Vec<Vec<f64>> = w.nu.iter().map(|&nu| thermal_populations(nu, cw)).collect();
    let diag: Vec<(usize, f64)> = (0..work.dim())
        .map(|i| (i, (0..n).map(|k| pops[k][work.occupation(i, k)]).product::<f64>()))
        .filter(|&(_, p)| p > NEGLIGIBLE)
        .collect();
    let mut f = CMatrix::zeros(work.dim(), diag.len());
    for (col, &(i, p)) in diag.iter().enumerate() {
        f[(i, col)] = Complex64::new(p.sqrt(), 0.0);
    }

    if !is_identity(&bm.o2) {
        f = PassiveLift::new(&passive_unitary(&bm.o2), work).left(&f);
    }
    for (k, &z) in bm.z.iter().enumerate() {
        let r = z.ln();
        if r.abs() > 1e-15 {
            f = left_local(&f, &squeeze_unitary(cw, r), work, k);
        }
    }
    if !is_identity(&bm.o1) {
        f = PassiveLift::new(&passive_unitary(&bm.o1), work).left(&f);
    }
    for k in 0..n {
        let alpha = Complex64::new(state.mean()[2 * k], state.mean()[2 * k + 1]) * std::f64::consts::FRAC_1_SQRT_2;
        if alpha.norm() > 0.0 {
            f = left_local(&f, &displacement_unitary(cw, alpha), work, k);
        }
    }

    let space = FockSpace::new(cutoff, n);
    let keep: Vec<usize> = (0..space.dim())
        .map(|i| (0..n).map(|k| space.occupation(i, k) * work.stride(k)).sum())
        .collect();
    let fk = f.select_rows(&keep);
    let m = &fk * fk.adjoint();
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let out = FockDensity::new(space, m);
    if out.trace_deficit > tol {
        return Err(Error::CutoffTooSmall { deficit: out.trace_deficit, tolerance: tol });
    }
    Ok(out)
}

//! Dense Hermitian eigensolver (cyclic Jacobi with complex rotations).
//!
//! Self-contained replacement for a LAPACK `zheev` dependency. The matrices
//! diagonalized here are small: subregion blocks of the correlation matrix
//! and many-body Hamiltonians of the brute-force reference sectors.

use ndarray::Array2;
use num_complex::Complex64 as C64;

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
pub fn eigh(a: &Array2<C64>) -> (Vec<f64>, Array2<C64>) {
    let (vals, vecs) = jacobi(a, true);
    (vals, vecs.expect("jacobi called with vectors"))
}

/// Eigenvalues (ascending) of a Hermitian matrix.
pub fn eigvalsh(a: &Array2<C64>) -> Vec<f64> {
    jacobi(a, false).0
}

fn jacobi(a: &Array2<C64>, with_vectors: bool) -> (Vec<f64>, Option<Array2<C64>>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut m = a.clone();
    let mut v = with_vectors.then(|| Array2::<C64>::eye(n));

    if n <= 1 {
        let vals = (0..n).map(|i| m[(i, i)].re).collect();
        return (vals, v);
    }

    let fro: f64 = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let tol = 1e-14 * fro.max(1.0);

    for _sweep in 0..60 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            break;
        }

        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let b = m[(p, q)];
                let absb = b.norm();
                if absb <= 1e-18 * fro.max(1.0) {
                    m[(p, q)] = C64::new(0.0, 0.0);
                    m[(q, p)] = C64::new(0.0, 0.0);
                    continue;
                }
                let phase = b / absb; // e^{i beta}
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                // tan(2 theta) = 2|b| / (app - aqq); pick the smaller rotation.
                let tau = (app - aqq) / (2.0 * absb);
                let t = if tau == 0.0 {
                    1.0
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                let sp = phase * s; // s e^{+i beta}
                let spc = phase.conj() * s; // s e^{-i beta}

                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    let new_kp = c * mkp + spc * mkq;
                    let new_kq = -sp * mkp + c * mkq;
                    m[(k, p)] = new_kp;
                    m[(k, q)] = new_kq;
                    m[(p, k)] = new_kp.conj();
                    m[(q, k)] = new_kq.conj();
                }
                let cross = 2.0 * absb * c * s;
                m[(p, p)] = C64::new(app * c * c + aqq * s * s + cross, 0.0);
                m[(q, q)] = C64::new(app * s * s + aqq * c * c - cross, 0.0);
                m[(p, q)] = C64::new(0.0, 0.0);
                m[(q, p)] = C64::new(0.0, 0.0);

                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp + spc * vkq;
                        v[(k, q)] = -sp * vkp + c * vkq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.partial_cmp(&m[(j, j)].re).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| m[(i, i)].re).collect();
    let vecs = v.map(|v| {
        let mut sorted = Array2::<C64>::zeros((n, n));
        for (col, &src) in order.iter().enumerate() {
            for k in 0..n {
                sorted[(k, col)] = v[(k, src)];
            }
        }
        sorted
    });
    (vals, vecs)
}

/// Largest absolute deviation from Hermiticity, max |A - A^dagger|.
pub fn hermiticity_defect(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for p in 0..n {
        for q in p..n {
            let d = (a[(p, q)] - a[(q, p)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

//! Copy-move and splicing forgeries with optional gradient-domain (Poisson)
//! blending of the pasted rectangle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{crop, paste_in_place, to_byte, BBox, BinaryMask, ImageBuf, ImagingError};

#[derive(Debug, Error)]
pub enum TamperError {
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("patch {0}x{1} has no interior; blending needs at least 3x3")]
    PatchTooSmall(u32, u32),
    #[error("poisson solve did not converge: max residual {max_residual:.3e} after {iterations} iterations")]
    NonConvergence { max_residual: f64, iterations: usize },
    #[error("invalid tamper operation: {0}")]
    InvalidOp(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TamperMethod {
    CopyMove,
    Splicing,
}

/// One forgery instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TamperOp {
    pub method: TamperMethod,
    pub source_box: BBox,
    pub dest_origin: (u32, u32),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub donor_id: Option<String>,
    pub blend: bool,
}

impl TamperOp {
    pub fn validate(&self) -> Result<(), TamperError> {
        match (self.method, &self.donor_id) {
            (TamperMethod::CopyMove, Some(_)) => {
                Err(TamperError::InvalidOp("copy-move cannot name a donor".into()))
            }
            (TamperMethod::Splicing, None) => {
                Err(TamperError::InvalidOp("splicing requires a donor".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn dest_box(&self) -> BBox {
        BBox::from_origin(
            self.dest_origin.0,
            self.dest_origin.1,
            self.source_box.width(),
            self.source_box.height(),
        )
    }

    /// Runs the operation; `donor` must be supplied exactly for splicing.
    pub fn apply(
        &self,
        image: &ImageBuf,
        donor: Option<&ImageBuf>,
        params: &SolverParams,
    ) -> Result<TamperOutcome, TamperError> {
        self.validate()?;
        match (self.method, donor) {
            (TamperMethod::CopyMove, None) => {
                copy_move(image, self.source_box, self.dest_origin, self.blend, params)
            }
            (TamperMethod::Splicing, Some(d)) => {
                splice(image, d, self.source_box, self.dest_origin, self.blend, params)
            }
            (TamperMethod::CopyMove, Some(_)) => {
                Err(TamperError::InvalidOp("copy-move given a donor image".into()))
            }
            (TamperMethod::Splicing, None) => {
                Err(TamperError::InvalidOp("splicing without a donor image".into()))
            }
        }
    }
}

/// Conjugate-gradient stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    /// Max absolute residual, in 8-bit intensity units.
    pub tol: f64,
    /// Iteration cap expressed per unknown.
    pub iters_per_unknown: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            iters_per_unknown: 10,
        }
    }
}

impl SolverParams {
    pub fn max_iters(&self, unknowns: usize) -> usize {
        self.iters_per_unknown.saturating_mul(unknowns).max(1)
    }
}

/// How the pasted rectangle was composited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BlendReport {
    Hard,
    Blended { max_residual: f64, iterations: usize },
    /// Blending was requested but the solver did not converge; a hard paste was used.
    FellBack { max_residual: f64, iterations: usize },
}

#[derive(Debug, Clone)]
pub struct TamperOutcome {
    pub image: ImageBuf,
    pub mask: BinaryMask,
    pub blend: BlendReport,
}

/// Forward-difference gradients of a patch, per channel.
#[derive(Debug, Clone)]
pub struct GuidanceField {
    width: usize,
    height: usize,
    gx: Vec<[f64; 3]>,
    gy: Vec<[f64; 3]>,
}

impl GuidanceField {
    /// `gx(x, y) = P(x+1, y) - P(x, y)`; zero on the last column (and likewise for `gy`).
    pub fn from_patch(patch: &ImageBuf) -> Self {
        let (w, h) = (patch.width() as usize, patch.height() as usize);
        let mut gx = vec![[0.0; 3]; w * h];
        let mut gy = vec![[0.0; 3]; w * h];
        for y in 0..h {
            for x in 0..w {
                let p = patch.pixel(x as u32, y as u32);
                for c in 0..3 {
                    if x + 1 < w {
                        gx[y * w + x][c] = patch.pixel(x as u32 + 1, y as u32)[c] as f64 - p[c] as f64;
                    }
                    if y + 1 < h {
                        gy[y * w + x][c] = patch.pixel(x as u32, y as u32 + 1)[c] as f64 - p[c] as f64;
                    }
                }
            }
        }
        Self {
            width: w,
            height: h,
            gx,
            gy,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn gx(&self, x: usize, y: usize, c: usize) -> f64 {
        self.gx[y * self.width + x][c]
    }

    pub fn gy(&self, x: usize, y: usize, c: usize) -> f64 {
        self.gy[y * self.width + x][c]
    }

    /// Backward-difference divergence at an interior point.
    pub fn divergence(&self, x: usize, y: usize, c: usize) -> f64 {
        self.gx(x, y, c) - self.gx(x - 1, y, c) + self.gy(x, y, c) - self.gy(x, y - 1, c)
    }
}

/// Interior Dirichlet problem for one channel: `A f = b` with `A` the 5-point
/// Laplacian `4 f(p) - sum f(q)` over the `(w-2) x (h-2)` interior.
#[derive(Debug, Clone)]
pub struct PoissonSystem {
    pub interior_w: usize,
    pub interior_h: usize,
    pub rhs: Vec<f64>,
}

impl PoissonSystem {
    /// Builds the right-hand side: `-div g` plus the target's border-ring values.
    pub fn assemble(
        target: &ImageBuf,
        guidance: &GuidanceField,
        origin: (u32, u32),
        channel: usize,
    ) -> Self {
        let (w, h) = guidance.dims();
        let (iw, ih) = (w - 2, h - 2);
        let mut rhs = vec![0.0; iw * ih];
        let border = |x: usize, y: usize| -> f64 {
            target.pixel(origin.0 + x as u32, origin.1 + y as u32)[channel] as f64
        };
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let mut b = -guidance.divergence(x, y, channel);
                if x == 1 {
                    b += border(0, y);
                }
                if x == w - 2 {
                    b += border(w - 1, y);
                }
                if y == 1 {
                    b += border(x, 0);
                }
                if y == h - 2 {
                    b += border(x, h - 1);
                }
                rhs[(y - 1) * iw + (x - 1)] = b;
            }
        }
        Self {
            interior_w: iw,
            interior_h: ih,
            rhs,
        }
    }

    pub fn unknowns(&self) -> usize {
        self.rhs.len()
    }

    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        let (iw, ih) = (self.interior_w, self.interior_h);
        for y in 0..ih {
            for x in 0..iw {
                let k = y * iw + x;
                let mut v = 4.0 * f[k];
                if x > 0 {
                    v -= f[k - 1];
                }
                if x + 1 < iw {
                    v -= f[k + 1];
                }
                if y > 0 {
                    v -= f[k - iw];
                }
                if y + 1 < ih {
                    v -= f[k + iw];
                }
                out[k] = v;
            }
        }
    }

    /// `max_k |b_k - (A f)_k|`
    pub fn max_residual(&self, f: &[f64]) -> f64 {
        let mut af = vec![0.0; f.len()];
        self.apply(f, &mut af);
        self.rhs
            .iter()
            .zip(&af)
            .map(|(b, a)| (b - a).abs())
            .fold(0.0, f64::max)
    }

    /// Conjugate gradient from `guess`. Returns `(solution, max_residual, iterations)`;
    /// convergence is judged on the true residual, not the recursive one.
    pub fn solve_cg(&self, guess: Vec<f64>, tol: f64, max_iters: usize) -> (Vec<f64>, f64, usize) {
        let n = self.unknowns();
        let mut x = guess;
        let mut ap = vec![0.0; n];
        let mut r = vec![0.0; n];
        self.apply(&x, &mut ap);
        for k in 0..n {
            r[k] = self.rhs[k] - ap[k];
        }
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let mut iters = 0;
        loop {
            if max_abs(&r) <= tol {
                let true_res = self.max_residual(&x);
                if true_res <= tol {
                    return (x, true_res, iters);
                }
                // recursive residual drifted; restart from the true one
                self.apply(&x, &mut ap);
                for k in 0..n {
                    r[k] = self.rhs[k] - ap[k];
                }
                p.copy_from_slice(&r);
                rr = dot(&r, &r);
            }
            if iters >= max_iters || rr == 0.0 {
                let res = self.max_residual(&x);
                return (x, res, iters);
            }
            self.apply(&p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let rr_next = dot(&r, &r);
            let beta = rr_next / rr;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
            rr = rr_next;
            iters += 1;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Result of a Poisson blend, with the unrounded interior solution kept for inspection.
#[derive(Debug, Clone)]
pub struct BlendResult {
    pub image: ImageBuf,
    /// Interior solution per channel, row-major over `(w-2) x (h-2)`.
    pub solution: [Vec<f64>; 3],
    pub max_residual: f64,
    pub iterations: usize,
}

/// Seamlessly composites `patch` into `target` at `dest_origin`. The outer ring of
/// the destination rectangle keeps the target's values and acts as the boundary.
pub fn poisson_blend(
    target: &ImageBuf,
    patch: &ImageBuf,
    dest_origin: (u32, u32),
    params: &SolverParams,
) -> Result<BlendResult, TamperError> {
    let (pw, ph) = patch.dims();
    if pw < 3 || ph < 3 {
        return Err(TamperError::PatchTooSmall(pw, ph));
    }
    BBox::from_origin(dest_origin.0, dest_origin.1, pw, ph).check_in(target.width(), target.height())?;

    let guidance = GuidanceField::from_patch(patch);
    let unknowns = (pw as usize - 2) * (ph as usize - 2);
    let max_iters = params.max_iters(unknowns);

    let solved: Vec<(Vec<f64>, f64, usize)> = (0..3)
        .into_par_iter()
        .map(|c| {
            let system = PoissonSystem::assemble(target, &guidance, dest_origin, c);
            let guess = (1..ph - 1)
                .flat_map(|y| (1..pw - 1).map(move |x| (x, y)))
                .map(|(x, y)| patch.pixel(x, y)[c] as f64)
                .collect();
            system.solve_cg(guess, params.tol, max_iters)
        })
        .collect();

    let max_residual = solved.iter().map(|s| s.1).fold(0.0, f64::max);
    let iterations = solved.iter().map(|s| s.2).max().unwrap_or(0);
    if max_residual > params.tol {
        return Err(TamperError::NonConvergence {
            max_residual,
            iterations,
        });
    }

    let mut image = target.clone();
    let iw = pw as usize - 2;
    for y in 1..ph - 1 {
        for x in 1..pw - 1 {
            let k = (y as usize - 1) * iw + (x as usize - 1);
            image.set_pixel(
                dest_origin.0 + x,
                dest_origin.1 + y,
                [to_byte(solved[0].0[k]), to_byte(solved[1].0[k]), to_byte(solved[2].0[k])],
            );
        }
    }
    let mut it = solved.into_iter().map(|s| s.0);
    let solution = [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()];
    Ok(BlendResult {
        image,
        solution,
        max_residual,
        iterations,
    })
}

fn composite(
    target: &ImageBuf,
    patch: &ImageBuf,
    dest_origin: (u32, u32),
    blend: bool,
    params: &SolverParams,
) -> Result<TamperOutcome, TamperError> {
    let dest = BBox::from_origin(dest_origin.0, dest_origin.1, patch.width(), patch.height());
    dest.check_in(target.width(), target.height())?;
    let mask = BinaryMask::from_boxes(target.width(), target.height(), &[dest]);

    if blend {
        match poisson_blend(target, patch, dest_origin, params) {
            Ok(r) => {
                return Ok(TamperOutcome {
                    image: r.image,
                    mask,
                    blend: BlendReport::Blended {
                        max_residual: r.max_residual,
                        iterations: r.iterations,
                    },
                })
            }
            Err(TamperError::NonConvergence {
                max_residual,
                iterations,
            }) => {
                let mut image = target.clone();
                paste_in_place(&mut image, patch, dest_origin.0, dest_origin.1)?;
                return Ok(TamperOutcome {
                    image,
                    mask,
                    blend: BlendReport::FellBack {
                        max_residual,
                        iterations,
                    },
                });
            }
            Err(e) => return Err(e),
        }
    }

    let mut image = target.clone();
    paste_in_place(&mut image, patch, dest_origin.0, dest_origin.1)?;
    Ok(TamperOutcome {
        image,
        mask,
        blend: BlendReport::Hard,
    })
}

/// Duplicates `source_box` of `image` at `dest_origin`. Source and destination may overlap;
/// the patch is read from the untouched input.
pub fn copy_move(
    image: &ImageBuf,
    source_box: BBox,
    dest_origin: (u32, u32),
    blend: bool,
    params: &SolverParams,
) -> Result<TamperOutcome, TamperError> {
    let patch = crop(image, &source_box)?;
    composite(image, &patch, dest_origin, blend, params)
}

/// Pastes `source_box` of `donor` into `acceptor` at `dest_origin`.
pub fn splice(
    acceptor: &ImageBuf,
    donor: &ImageBuf,
    source_box: BBox,
    dest_origin: (u32, u32),
    blend: bool,
    params: &SolverParams,
) -> Result<TamperOutcome, TamperError> {
    let patch = crop(donor, &source_box)?;
    composite(acceptor, &patch, dest_origin, blend, params)
}

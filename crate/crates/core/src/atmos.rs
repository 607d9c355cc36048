//! Synthetic atmospheric phase screens.
//!
//! Two contributions are modelled: spatially correlated turbulent water
//! vapour (an isotropic Gaussian random field with exponential covariance)
//! and stratified delay correlated with topography (either a linear function
//! of elevation or the difference of two zenith total delay maps).

use crate::error::{Error, Result};
use crate::grid::{GridShape, LosGeometry, Raster, Unit, DEFAULT_WAVELENGTH_M};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Radians of interferometric phase per millimetre of one-way delay at the
/// default wavelength.
pub fn phase_per_mm_delay() -> f64 {
    -4.0 * PI / (DEFAULT_WAVELENGTH_M * 1000.0)
}

/// Exponential covariance model of turbulent delay, in millimetres squared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceParams {
    pub sigma2_max_mm2: f64,
    pub efold_km: f64,
}

impl CovarianceParams {
    pub fn new(sigma2_max_mm2: f64, efold_km: f64) -> Result<Self> {
        if !(sigma2_max_mm2 > 0.0) || !(efold_km > 0.0) {
            return Err(Error::Covariance(
                "covariance parameters must be positive and finite".into(),
            ));
        }
        Ok(CovarianceParams { sigma2_max_mm2, efold_km })
    }

    /// Draw parameters uniformly from the default synthesis ranges:
    /// sigma^2 in [5, 9] mm^2 and e-folding length in [4, 18] km.
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        CovarianceParams {
            sigma2_max_mm2: rng.gen_range(5.0..=9.0),
            efold_km: rng.gen_range(4.0..=18.0),
        }
    }
}

/// Covariance at separation `d_km`: sigma^2 * exp(-d / L).
pub fn exp_covariance(d_km: f64, p: &CovarianceParams) -> f64 {
    p.sigma2_max_mm2 * (-d_km / p.efold_km).exp()
}

/// Which synthesis algorithm a [`TurbulenceSynth`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurbBackend {
    /// Pick automatically: Cholesky for grids of at most 64x64 pixels,
    /// circulant embedding otherwise.
    Auto,
    /// Dense Cholesky factorization of the full pixel covariance matrix.
    Cholesky,
    /// Circulant embedding on an enlarged torus, sampled spectrally.
    Circulant,
}

enum BackendImpl {
    /// Lower-triangular Cholesky factor, row-major n x n.
    Cholesky { factor: Vec<f64>, n: usize },
    /// Real non-negative spectral amplitudes on the embedding torus.
    Circulant { mw: usize, mh: usize, amp: Vec<f64> },
}

/// Precomputed sampler for turbulent delay fields on a fixed grid. The
/// expensive factorization is done once; each seed then yields one field.
pub struct TurbulenceSynth {
    grid: GridShape,
    backend: BackendImpl,
}

const CHOLESKY_MAX_PIXELS: usize = 64 * 64;

impl TurbulenceSynth {
    pub fn new(p: &CovarianceParams, grid: &GridShape) -> Result<Self> {
        Self::with_backend(p, grid, TurbBackend::Auto)
    }

    pub fn with_backend(
        p: &CovarianceParams,
        grid: &GridShape,
        backend: TurbBackend,
    ) -> Result<Self> {
        if grid.width < 8 || grid.height < 8 {
            return Err(Error::Covariance(
                "turbulence synthesis requires a grid of at least 8x8 pixels".into(),
            ));
        }
        let use_cholesky = match backend {
            TurbBackend::Cholesky => true,
            TurbBackend::Circulant => false,
            TurbBackend::Auto => grid.len() <= CHOLESKY_MAX_PIXELS,
        };
        let backend = if use_cholesky {
            build_cholesky(p, grid)?
        } else {
            build_circulant(p, grid)?
        };
        Ok(TurbulenceSynth { grid: grid.clone(), backend })
    }

    /// One delay realization in millimetres, deterministic per seed.
    pub fn realize_delay_mm(&self, seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = match &self.backend {
            BackendImpl::Cholesky { factor, n } => {
                let z: Vec<f64> = (0..*n).map(|_| rng.sample(StandardNormal)).collect();
                let mut out = vec![0.0f64; *n];
                for (i, item) in out.iter_mut().enumerate() {
                    let row = &factor[i * n..i * n + i + 1];
                    *item = row.iter().zip(&z).map(|(a, b)| a * b).sum();
                }
                out
            }
            BackendImpl::Circulant { mw, mh, amp } => {
                let m = mw * mh;
                let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
                let mut buf: Vec<Complex<f64>> = amp
                    .iter()
                    .map(|&a| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex::new(re, im) * (a * inv_sqrt2)
                    })
                    .collect();
                fft2(&mut buf, *mw, *mh, false);
                // unnormalized inverse used: divide by sqrt(M); the real part
                // carries half the variance, so scale by sqrt(2)
                let scale = (2.0 / m as f64).sqrt();
                let mut out = Vec::with_capacity(self.grid.len());
                for row in 0..self.grid.height {
                    for col in 0..self.grid.width {
                        out.push(buf[row * mw + col].re * scale);
                    }
                }
                out
            }
        };
        Raster::new(
            self.grid.width,
            self.grid.height,
            self.grid.spacing_m,
            Unit::DelayMm,
            values,
        )
        .expect("grid validated at construction")
    }

    /// One realization converted to interferometric phase in radians.
    pub fn realize(&self, seed: u64) -> Raster {
        let mm = self.realize_delay_mm(seed);
        let k = phase_per_mm_delay();
        let values = mm.values().iter().map(|&v| v * k).collect();
        mm.with_values(Unit::PhaseRad, values).expect("same grid")
    }
}

/// Convenience wrapper: factorize and draw a single turbulent phase screen.
pub fn synth_turbulent(p: &CovarianceParams, grid: &GridShape, seed: u64) -> Result<Raster> {
    Ok(TurbulenceSynth::new(p, grid)?.realize(seed))
}

fn build_cholesky(p: &CovarianceParams, grid: &GridShape) -> Result<BackendImpl> {
    let n = grid.len();
    let w = grid.width;
    let mut cov = vec![0.0f64; n * n];
    for a in 0..n {
        let (ra, ca) = (a / w, a % w);
        for b in 0..=a {
            let (rb, cb) = (b / w, b % w);
            let dx = (ca as f64 - cb as f64) * grid.spacing_m;
            let dy = (ra as f64 - rb as f64) * grid.spacing_m;
            let d_km = dx.hypot(dy) / 1000.0;
            let c = exp_covariance(d_km, p);
            cov[a * n + b] = c;
            cov[b * n + a] = c;
        }
    }
    // small diagonal jitter guards against numerical semi-definiteness
    let jitter = 1e-9 * p.sigma2_max_mm2;
    for i in 0..n {
        cov[i * n + i] += jitter;
    }
    cholesky_in_place(&mut cov, n)?;
    Ok(BackendImpl::Cholesky { factor: cov, n })
}

/// In-place lower Cholesky; the strict upper triangle is zeroed.
fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 {
            return Err(Error::Covariance(format!(
                "covariance matrix is not positive definite at pivot {j}"
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for j in 0..n {
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

fn build_circulant(p: &CovarianceParams, grid: &GridShape) -> Result<BackendImpl> {
    let mut mw = (2 * grid.width).next_power_of_two();
    let mut mh = (2 * grid.height).next_power_of_two();
    // padding the torus until the embedding is exactly nonnegative can blow
    // the FFT up to millions of points when the e-folding length exceeds the
    // scene size; cap the embedding and clamp the residual negative
    // eigenvalues instead (the covariance error this introduces is far below
    // the sampling noise of any single realization)
    let cap = 512usize.max(mw).max(mh);
    loop {
        let mut kernel: Vec<Complex<f64>> = Vec::with_capacity(mw * mh);
        for j in 0..mh {
            let wy = j.min(mh - j) as f64 * grid.spacing_m;
            for i in 0..mw {
                let wx = i.min(mw - i) as f64 * grid.spacing_m;
                let d_km = wx.hypot(wy) / 1000.0;
                kernel.push(Complex::new(exp_covariance(d_km, p), 0.0));
            }
        }
        fft2(&mut kernel, mw, mh, true);
        let max_eig = kernel.iter().map(|c| c.re).fold(0.0f64, f64::max);
        let min_eig = kernel.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        if min_eig >= -1e-8 * max_eig || mw.max(mh) * 2 > cap {
            let amp = kernel.iter().map(|c| c.re.max(0.0).sqrt()).collect();
            return Ok(BackendImpl::Circulant { mw, mh, amp });
        }
        mw *= 2;
        mh *= 2;
    }
}

/// Unnormalized 2-D FFT over a row-major `mw` x `mh` complex buffer.
fn fft2(buf: &mut [Complex<f64>], mw: usize, mh: usize, forward: bool) {
    let mut planner = FftPlanner::new();
    let fft_row = if forward {
        planner.plan_fft_forward(mw)
    } else {
        planner.plan_fft_inverse(mw)
    };
    for row in buf.chunks_exact_mut(mw) {
        fft_row.process(row);
    }
    let fft_col = if forward {
        planner.plan_fft_forward(mh)
    } else {
        planner.plan_fft_inverse(mh)
    };
    let mut col = vec![Complex::new(0.0, 0.0); mh];
    for c in 0..mw {
        for (j, item) in col.iter_mut().enumerate() {
            *item = buf[j * mw + c];
        }
        fft_col.process(&mut col);
        for (j, item) in col.iter().enumerate() {
            buf[j * mw + c] = *item;
        }
    }
}

/// Estimated covariance parameters, with a flag for degenerate inputs where
/// no correlation length can be defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovEstimate {
    pub sigma2_max_mm2: f64,
    pub efold_km: f64,
    /// True when the image was (numerically) constant: sigma^2 is zero and
    /// the correlation length is meaningless.
    pub degenerate: bool,
}

/// Fit (sigma^2, L) of an exponential covariance model to an image by least
/// squares on the log of the radially binned empirical autocovariance.
///
/// Accepts delay (mm) or phase (radians, converted to mm at the default
/// wavelength). Lags up to a quarter of the shorter grid extent are used.
pub fn estimate_cov_params(img: &Raster) -> Result<CovEstimate> {
    let to_mm = match img.unit() {
        Unit::DelayMm => 1.0,
        Unit::PhaseRad => 1.0 / phase_per_mm_delay(),
        other => {
            return Err(Error::UnitMismatch { expected: Unit::DelayMm, got: other })
        }
    };
    let (w, h) = (img.width(), img.height());
    if w < 16 || h < 16 {
        return Err(Error::Covariance(
            "covariance estimation requires at least 16x16 pixels".into(),
        ));
    }
    let mean = img.mean();
    let v: Vec<f64> = img.values().iter().map(|&x| (x - mean) * to_mm).collect();

    // FFT-based autocovariance: zero-pad to the embedding torus so linear
    // lags do not wrap, then normalize by the pair count at each lag.
    let mw = (2 * w).next_power_of_two();
    let mh = (2 * h).next_power_of_two();
    let mut data = vec![Complex::new(0.0, 0.0); mw * mh];
    let mut mask = vec![Complex::new(0.0, 0.0); mw * mh];
    for row in 0..h {
        for col in 0..w {
            data[row * mw + col] = Complex::new(v[row * w + col], 0.0);
            mask[row * mw + col] = Complex::new(1.0, 0.0);
        }
    }
    fft2(&mut data, mw, mh, true);
    fft2(&mut mask, mw, mh, true);
    for (d, m) in data.iter_mut().zip(mask.iter_mut()) {
        *d = Complex::new(d.norm_sqr(), 0.0);
        *m = Complex::new(m.norm_sqr(), 0.0);
    }
    fft2(&mut data, mw, mh, false);
    fft2(&mut mask, mw, mh, false);

    // radial bins of width one pixel spacing
    let max_lag_m = (w.min(h) as f64) * img.spacing_m() / 4.0;
    let nbins = (max_lag_m / img.spacing_m()).floor() as usize + 1;
    let mut sum = vec![0.0f64; nbins];
    let mut cnt = vec![0.0f64; nbins];
    for j in 0..mh {
        let ly = (j.min(mh - j)) as f64;
        if ly >= h as f64 {
            continue;
        }
        for i in 0..mw {
            let lx = (i.min(mw - i)) as f64;
            if lx >= w as f64 {
                continue;
            }
            let d_m = lx.hypot(ly) * img.spacing_m();
            if d_m > max_lag_m {
                continue;
            }
            let pairs = (mask[j * mw + i].re / (mw * mh) as f64).round();
            if pairs < 0.5 {
                continue;
            }
            let b = (d_m / img.spacing_m()).round() as usize;
            if b >= nbins {
                continue;
            }
            sum[b] += data[j * mw + i].re / (mw * mh) as f64;
            cnt[b] += pairs;
        }
    }
    let bins: Vec<Option<f64>> = sum
        .iter()
        .zip(&cnt)
        .map(|(&s, &c)| if c > 0.0 { Some(s / c) } else { None })
        .collect();
    let c0 = bins[0].unwrap_or(0.0);
    if c0 < 1e-12 {
        return Ok(CovEstimate { sigma2_max_mm2: 0.0, efold_km: f64::NAN, degenerate: true });
    }

    // log-linear fit over the contiguous run of bins that stay above a
    // floor of the zero-lag variance; stop at the first dropout
    let mut xs = vec![0.0f64];
    let mut ys = vec![c0.ln()];
    for (b, bin) in bins.iter().enumerate().skip(1) {
        match bin {
            Some(c) if *c > 0.01 * c0 => {
                xs.push(b as f64 * img.spacing_m() / 1000.0);
                ys.push(c.ln());
            }
            _ => break,
        }
    }
    let spacing_km = img.spacing_m() / 1000.0;
    if xs.len() < 2 {
        // no measurable correlation beyond zero lag (e.g. white noise)
        return Ok(CovEstimate {
            sigma2_max_mm2: c0,
            efold_km: 0.5 * spacing_km,
            degenerate: false,
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut efold_km = if slope < -1e-12 { -1.0 / slope } else { 0.5 * spacing_km };
    let mut sigma2 = intercept.exp();

    // Refine in linear space with a constant offset term: removing the scene
    // mean depresses the empirical covariance uniformly across lags, which a
    // pure log fit misreads as a steeper decay. Model c(d) = s*exp(-d/L) + b.
    let pts: Vec<(f64, f64)> = bins
        .iter()
        .enumerate()
        .filter_map(|(b, v)| v.map(|c| (b as f64 * spacing_km, c)))
        .collect();
    if pts.len() >= 4 {
        let extent_km = img.width().max(img.height()) as f64 * spacing_km;
        let (mut s, mut l, mut b) = (sigma2, efold_km.min(extent_km), 0.0f64);
        for _ in 0..60 {
            // Gauss-Newton normal equations for (s, l, b)
            let mut jtj = [[0.0f64; 3]; 3];
            let mut jtr = [0.0f64; 3];
            for &(d, c) in &pts {
                let e = (-d / l).exp();
                let row = [e, s * e * d / (l * l), 1.0];
                let r = c - (s * e + b);
                for a in 0..3 {
                    for q in 0..3 {
                        jtj[a][q] += row[a] * row[q];
                    }
                    jtr[a] += row[a] * r;
                }
            }
            match solve3(&jtj, &jtr) {
                Some(step) => {
                    s += step[0];
                    l += step[1];
                    b += step[2];
                    if !(s > 0.0 && l > 0.0) {
                        break;
                    }
                    if step.iter().map(|v| v.abs()).fold(0.0f64, f64::max) < 1e-10 {
                        break;
                    }
                }
                None => break,
            }
        }
        // keep the refined fit only if it stayed in a physically sane range;
        // noisy single realizations can otherwise send L to infinity
        if s > 0.0 && s.is_finite() && l > 0.1 * spacing_km && l < 2.0 * extent_km {
            sigma2 = s;
            efold_km = l;
        }
    }
    Ok(CovEstimate { sigma2_max_mm2: sigma2, efold_km, degenerate: false })
}

/// Solve a symmetric 3x3 linear system by Gaussian elimination.
fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..4 {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

/// Shape of a synthetic volcanic edifice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemKind {
    Cone,
    Shield,
}

impl DemKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cone" => Ok(DemKind::Cone),
            "shield" => Ok(DemKind::Shield),
            other => Err(Error::Config(format!("unknown DEM kind '{other}'"))),
        }
    }
}

/// Smooth radially symmetric edifice height at radius `r_m`, before
/// roughness is added.
pub fn edifice_profile(kind: DemKind, peak_height_m: f64, r_m: f64, base_radius_m: f64) -> f64 {
    let t = (r_m / base_radius_m).min(1.0);
    match kind {
        DemKind::Cone => peak_height_m * (1.0 - t),
        DemKind::Shield => peak_height_m * (1.0 - t * t),
    }
}

/// Synthesize a DEM: a centred edifice plus seeded fractal roughness with
/// peak amplitude 10% of the summit height, clamped to non-negative values.
pub fn synth_dem(kind: DemKind, peak_height_m: f64, grid: &GridShape, seed: u64) -> Result<Raster> {
    if !(peak_height_m > 0.0) {
        return Err(Error::OutOfRange("DEM peak height must be positive".into()));
    }
    let (hx, hy) = grid.half_extent_m();
    let base = 0.8 * hx.min(hy).max(grid.spacing_m);
    let mut values = Vec::with_capacity(grid.len());
    for row in 0..grid.height {
        for col in 0..grid.width {
            let r = grid.x_of_col(col).hypot(grid.y_of_row(row));
            values.push(edifice_profile(kind, peak_height_m, r, base));
        }
    }
    let rough = fractal_noise(grid, seed);
    let max_abs = rough.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-12);
    let amp = 0.1 * peak_height_m / max_abs;
    for (v, r) in values.iter_mut().zip(&rough) {
        *v = (*v + amp * r).max(0.0);
    }
    Raster::new(grid.width, grid.height, grid.spacing_m, Unit::ElevationM, values)
}

/// Zero-mean 1/f spectral noise, deterministic per seed.
fn fractal_noise(grid: &GridShape, seed: u64) -> Vec<f64> {
    let mw = grid.width.next_power_of_two().max(8);
    let mh = grid.height.next_power_of_two().max(8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex<f64>> = (0..mw * mh)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(re, im)
        })
        .collect();
    fft2(&mut buf, mw, mh, true);
    for j in 0..mh {
        let ky = j.min(mh - j) as f64 / mh as f64;
        for i in 0..mw {
            let kx = i.min(mw - i) as f64 / mw as f64;
            let k = kx.hypot(ky);
            let g = if k > 0.0 { 1.0 / k } else { 0.0 };
            buf[j * mw + i] *= g;
        }
    }
    fft2(&mut buf, mw, mh, false);
    let mut out = Vec::with_capacity(grid.len());
    for row in 0..grid.height {
        for col in 0..grid.width {
            out.push(buf[row * mw + col].re);
        }
    }
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    for v in &mut out {
        *v -= mean;
    }
    out
}

/// Topography-correlated delay model.
#[derive(Debug, Clone)]
pub enum StratifiedModel {
    /// Phase proportional to elevation above the scene mean.
    LinearElevation { dem: Raster, slope_rad_per_km: f64 },
    /// Difference of two zenith total delay maps (slave minus master).
    ZtdPair { ztd_master: Raster, ztd_slave: Raster },
}

/// Draw a stratified slope for Monte Carlo scenes: magnitude uniform in
/// [0.3, 2.5] rad/km with random sign.
pub fn sample_stratified_slope<R: Rng>(rng: &mut R) -> f64 {
    let mag = rng.gen_range(0.3..=2.5);
    if rng.gen_bool(0.5) {
        mag
    } else {
        -mag
    }
}

/// Stratified phase screen from a linear-elevation model:
/// S = slope * (h - mean(h)) / cos(incidence), in radians.
pub fn synth_stratified(model: &StratifiedModel, geom: &LosGeometry) -> Result<Raster> {
    let StratifiedModel::LinearElevation { dem, slope_rad_per_km } = model else {
        return Err(Error::Config(
            "synth_stratified requires the linear-elevation model; use stratified_from_ztd for ZTD pairs"
                .into(),
        ));
    };
    dem.expect_unit(Unit::ElevationM)?;
    let mean = dem.mean();
    let los = 1.0 / geom.incidence_deg().to_radians().cos();
    let values = dem
        .values()
        .iter()
        .map(|&h| slope_rad_per_km * (h - mean) / 1000.0 * los)
        .collect();
    dem.with_values(Unit::PhaseRad, values)
}

/// Stratified phase screen from a ZTD map pair:
/// S = (ZTD_slave - ZTD_master) / cos(incidence), converted mm to radians.
pub fn stratified_from_ztd(model: &StratifiedModel, geom: &LosGeometry) -> Result<Raster> {
    let StratifiedModel::ZtdPair { ztd_master, ztd_slave } = model else {
        return Err(Error::Config(
            "stratified_from_ztd requires the ZTD-pair model".into(),
        ));
    };
    ztd_master.expect_unit(Unit::DelayMm)?;
    ztd_slave.expect_unit(Unit::DelayMm)?;
    if !ztd_master.same_grid(ztd_slave) {
        return Err(Error::GridMismatch("ZTD master and slave grids differ".into()));
    }
    let k = -4.0 * PI / (geom.wavelength_m() * 1000.0);
    let los = 1.0 / geom.incidence_deg().to_radians().cos();
    let values = ztd_master
        .values()
        .iter()
        .zip(ztd_slave.values())
        .map(|(&m, &s)| (s - m) * los * k)
        .collect();
    ztd_master.with_values(Unit::PhaseRad, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(s2: f64, l: f64) -> CovarianceParams {
        CovarianceParams::new(s2, l).unwrap()
    }

    #[test]
    fn covariance_at_zero_and_efold() {
        let p = params(7.0, 10.0);
        assert_eq!(exp_covariance(0.0, &p), 7.0);
        let e = exp_covariance(10.0, &p);
        assert!((e - 7.0 / std::f64::consts::E).abs() < 1e-12);
        assert!(exp_covariance(3.0, &p) > exp_covariance(3.1, &p));
    }

    #[test]
    fn turbulence_same_seed_is_identical() {
        let grid = GridShape::new(24, 24, 500.0).unwrap();
        let a = synth_turbulent(&params(7.0, 10.0), &grid, 42).unwrap();
        let b = synth_turbulent(&params(7.0, 10.0), &grid, 42).unwrap();
        assert_eq!(a, b);
        let c = synth_turbulent(&params(7.0, 10.0), &grid, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn cholesky_ensemble_variance_matches_sigma2() {
        let grid = GridShape::new(16, 16, 800.0).unwrap();
        let p = params(7.0, 10.0);
        let synth = TurbulenceSynth::with_backend(&p, &grid, TurbBackend::Cholesky).unwrap();
        let n = 600usize;
        let mut var = vec![0.0f64; grid.len()];
        for s in 0..n {
            let f = synth.realize_delay_mm(s as u64);
            for (v, &x) in var.iter_mut().zip(f.values()) {
                *v += x * x;
            }
        }
        let mean_var = var.iter().sum::<f64>() / (n * grid.len()) as f64;
        assert!(
            (mean_var - 7.0).abs() < 0.7,
            "ensemble variance {mean_var} departs from 7 mm^2"
        );
    }

    #[test]
    fn backends_agree_on_binned_covariance() {
        let grid = GridShape::new(16, 16, 1000.0).unwrap();
        let p = params(7.0, 8.0);
        let n = 800usize;
        let mut lags = Vec::new();
        for backend in [TurbBackend::Cholesky, TurbBackend::Circulant] {
            let synth = TurbulenceSynth::with_backend(&p, &grid, backend).unwrap();
            // covariance against the grid centre pixel, binned by lag radius
            let c = grid.len() / 2 + grid.width / 2;
            let mut sum = vec![0.0f64; 8];
            let mut cnt = vec![0.0f64; 8];
            for s in 0..n {
                let f = synth.realize_delay_mm(1000 + s as u64);
                let vc = f.values()[c];
                for (i, &v) in f.values().iter().enumerate() {
                    let dr = (i / 16) as f64 - (c / 16) as f64;
                    let dc = (i % 16) as f64 - (c % 16) as f64;
                    let b = dr.hypot(dc).round() as usize;
                    if b < 8 {
                        sum[b] += vc * v;
                        cnt[b] += 1.0;
                    }
                }
            }
            lags.push(
                sum.iter().zip(&cnt).map(|(s, c)| s / c / n as f64).collect::<Vec<f64>>(),
            );
        }
        for b in 0..8 {
            let (a, c) = (lags[0][b], lags[1][b]);
            assert!(
                (a - c).abs() / p.sigma2_max_mm2 < 0.1,
                "bin {b}: cholesky {a} vs circulant {c}"
            );
        }
    }

    #[test]
    fn estimate_recovers_parameters_in_ensemble_mean() {
        let grid = GridShape::new(64, 64, 2000.0).unwrap();
        let p = params(7.0, 10.0);
        let synth = TurbulenceSynth::with_backend(&p, &grid, TurbBackend::Circulant).unwrap();
        let n = 40usize;
        let (mut s2, mut l) = (0.0, 0.0);
        for s in 0..n {
            let est = estimate_cov_params(&synth.realize_delay_mm(500 + s as u64)).unwrap();
            assert!(!est.degenerate);
            s2 += est.sigma2_max_mm2;
            l += est.efold_km;
        }
        s2 /= n as f64;
        l /= n as f64;
        assert!((s2 - 7.0).abs() / 7.0 < 0.1, "sigma2 estimate {s2}");
        assert!((l - 10.0).abs() / 10.0 < 0.1, "efold estimate {l}");
    }

    #[test]
    fn estimate_flags_constant_image() {
        let grid = GridShape::new(20, 20, 500.0).unwrap();
        let img = Raster::new(20, 20, 500.0, Unit::DelayMm, vec![3.5; 400]).unwrap();
        let est = estimate_cov_params(&img).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.sigma2_max_mm2, 0.0);
        let _ = grid;
    }

    #[test]
    fn estimate_white_noise_has_tiny_correlation_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vals: Vec<f64> = (0..32 * 32).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let img = Raster::new(32, 32, 1000.0, Unit::DelayMm, vals).unwrap();
        let est = estimate_cov_params(&img).unwrap();
        assert!(est.efold_km < 2.0, "white-noise efold {} km", est.efold_km);
    }

    #[test]
    fn dem_is_deterministic_with_centred_peak() {
        let grid = GridShape::new(33, 33, 400.0).unwrap();
        let a = synth_dem(DemKind::Cone, 1500.0, &grid, 7).unwrap();
        let b = synth_dem(DemKind::Cone, 1500.0, &grid, 7).unwrap();
        assert_eq!(a, b);
        let centre = a.get(16, 16);
        assert!((centre - 1500.0).abs() <= 150.0, "centre height {centre}");
        assert!(a.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn cone_profile_monotone_in_radius() {
        for r in 0..100 {
            let h0 = edifice_profile(DemKind::Cone, 1000.0, r as f64 * 10.0, 900.0);
            let h1 = edifice_profile(DemKind::Cone, 1000.0, (r + 1) as f64 * 10.0, 900.0);
            assert!(h1 <= h0);
        }
    }

    #[test]
    fn stratified_linear_tracks_elevation() {
        let grid = GridShape::new(24, 24, 500.0).unwrap();
        let dem = synth_dem(DemKind::Shield, 1200.0, &grid, 3).unwrap();
        let geom = LosGeometry::new(0.0, 350.0).unwrap();
        let model = StratifiedModel::LinearElevation { dem: dem.clone(), slope_rad_per_km: 1.0 };
        let s = synth_stratified(&model, &geom).unwrap();
        // with zero incidence the screen is exactly slope * (h - mean)
        let mean = dem.mean();
        for (i, &v) in s.values().iter().enumerate() {
            let want = (dem.values()[i] - mean) / 1000.0;
            assert!((v - want).abs() < 1e-12);
        }
        let zero = StratifiedModel::LinearElevation { dem, slope_rad_per_km: 0.0 };
        assert!(synth_stratified(&zero, &geom).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ztd_difference_scales_with_incidence() {
        let master = Raster::new(16, 16, 500.0, Unit::DelayMm, vec![100.0; 256]).unwrap();
        let slave = Raster::new(16, 16, 500.0, Unit::DelayMm, vec![110.0; 256]).unwrap();
        let nadir = LosGeometry::new(0.0, 0.0).unwrap();
        let oblique = LosGeometry::new(45.0, 0.0).unwrap();
        let m0 = StratifiedModel::ZtdPair { ztd_master: master.clone(), ztd_slave: slave.clone() };
        let s0 = stratified_from_ztd(&m0, &nadir).unwrap();
        let want = 10.0 * phase_per_mm_delay();
        assert!(s0.values().iter().all(|&v| (v - want).abs() < 1e-12));
        let s45 = stratified_from_ztd(&m0, &oblique).unwrap();
        let ratio = s45.values()[0] / s0.values()[0];
        assert!((ratio - std::f64::consts::SQRT_2).abs() < 1e-12);
        // identical maps give a zero screen
        let eq = StratifiedModel::ZtdPair { ztd_master: master.clone(), ztd_slave: master };
        assert!(stratified_from_ztd(&eq, &nadir).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ztd_screen_is_antisymmetric_under_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..256).map(|_| rng.gen_range(50.0..150.0)).collect();
        let b: Vec<f64> = (0..256).map(|_| rng.gen_range(50.0..150.0)).collect();
        let master = Raster::new(16, 16, 500.0, Unit::DelayMm, a).unwrap();
        let slave = Raster::new(16, 16, 500.0, Unit::DelayMm, b).unwrap();
        let geom = LosGeometry::new(30.0, 190.0).unwrap();
        let fwd = stratified_from_ztd(
            &StratifiedModel::ZtdPair { ztd_master: master.clone(), ztd_slave: slave.clone() },
            &geom,
        )
        .unwrap();
        let rev = stratified_from_ztd(
            &StratifiedModel::ZtdPair { ztd_master: slave, ztd_slave: master },
            &geom,
        )
        .unwrap();
        for (f, r) in fwd.values().iter().zip(rev.values()) {
            assert!((f + r).abs() < 1e-12);
        }
    }
}


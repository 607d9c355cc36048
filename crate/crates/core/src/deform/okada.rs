//! Okada (1985) surface displacement of a rectangular dislocation in an
//! elastic half-space, plus the corresponding point-source solution.

use super::{DisplacementField, ElasticMedium};
use crate::error::{Error, Result};
use crate::grid::GridShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OkadaSubtype {
    Earthquake,
    Dyke,
    Sill,
}

impl OkadaSubtype {
    pub fn name(&self) -> &'static str {
        match self {
            OkadaSubtype::Earthquake => "earthquake",
            OkadaSubtype::Dyke => "dyke",
            OkadaSubtype::Sill => "sill",
        }
    }
}

/// Rectangular dislocation source.
///
/// (x_m, y_m) is the horizontal position of the centre of the fault's
/// surface projection; depth_m is the depth of the top edge. Strike is
/// degrees clockwise from north; the fault dips down to the right of
/// strike. Rake is the slip direction in the fault plane, counterclockwise
/// from strike.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OkadaSource {
    pub x_m: f64,
    pub y_m: f64,
    pub depth_m: f64,
    pub strike_deg: f64,
    pub dip_deg: f64,
    pub rake_deg: f64,
    pub length_m: f64,
    pub width_m: f64,
    pub slip_m: f64,
    pub opening_m: f64,
    pub subtype: OkadaSubtype,
}

struct FaultFrame {
    sin_strike: f64,
    cos_strike: f64,
    sin_dip: f64,
    cos_dip: f64,
    /// depth of the bottom edge
    d_bottom: f64,
    /// potency components: strike-slip, dip-slip, tensile
    u1: f64,
    u2: f64,
    u3: f64,
    mu_prime: f64,
}

impl FaultFrame {
    fn new(src: &OkadaSource, medium: &ElasticMedium) -> Self {
        let dip = src.dip_deg.to_radians();
        let rake = src.rake_deg.to_radians();
        FaultFrame {
            sin_strike: src.strike_deg.to_radians().sin(),
            cos_strike: src.strike_deg.to_radians().cos(),
            sin_dip: dip.sin(),
            cos_dip: dip.cos(),
            d_bottom: src.depth_m + src.width_m * dip.sin(),
            u1: src.slip_m * rake.cos(),
            u2: src.slip_m * rake.sin(),
            u3: src.opening_m,
            // mu / (lambda + mu) = 1 - 2 nu
            mu_prime: 1.0 - 2.0 * medium.poisson_ratio,
        }
    }

    /// Map a grid-frame offset (east, north) relative to the fault centre
    /// into Okada fault coordinates (x along strike, y cross-strike updip).
    fn to_fault_xy(&self, src: &OkadaSource, de: f64, dn: f64) -> (f64, f64) {
        // x axis: strike direction; y axis: horizontal updip (left of strike
        // for a fault dipping to the right of strike).
        let along = de * self.sin_strike + dn * self.cos_strike;
        // updip axis points left of strike (azimuth strike - 90 deg) for a
        // fault dipping to the right of strike:
        let y_updip = -(de * self.cos_strike) + dn * self.sin_strike;
        // shift to the bottom-left corner origin: the centre of the surface
        // projection sits at xi = L/2, y = W cos(dip) / 2 from the bottom edge.
        (
            along + src.length_m / 2.0,
            y_updip + src.width_m * self.cos_dip / 2.0,
        )
    }
}

const EPS: f64 = 1e-12;

/// One Chinnery corner term: displacement in fault coordinates at (xi, eta)
/// with cross-strike coordinate y and bottom depth d. Returns the strike-slip,
/// dip-slip and tensile contributions (each a 3-vector), excluding the
/// -U/(2 pi) factors.
fn corner_terms(frame: &FaultFrame, xi: f64, eta: f64, y: f64, d: f64) -> [[f64; 3]; 3] {
    let sd = frame.sin_dip;
    let cd = frame.cos_dip;
    let mu_p = frame.mu_prime;

    let q = y * sd - d * cd;
    let y_t = eta * cd + q * sd;
    let d_t = eta * sd - q * cd;
    let r = (xi * xi + eta * eta + q * q).sqrt();
    let x = (xi * xi + q * q).sqrt();

    // guards against the R + eta = 0 / R + xi = 0 degeneracies
    let (inv_r_eta, ln_r_eta) = if r + eta < EPS * r.max(1.0) {
        (0.0, -((r - eta).max(EPS)).ln())
    } else {
        (1.0 / (r + eta), (r + eta).ln())
    };
    let inv_r_xi = if r + xi < EPS * r.max(1.0) { 0.0 } else { 1.0 / (r + xi) };

    let theta = if q.abs() < EPS { 0.0 } else { (xi * eta / (q * r)).atan() };

    let (i1, i2, i3, i4, i5);
    if cd.abs() > 1e-6 {
        i5 = if xi.abs() < EPS {
            0.0
        } else {
            mu_p * 2.0 / cd
                * ((eta * (x + q * cd) + x * (r + x) * sd) / (xi * (r + x) * cd)).atan()
        };
        i4 = mu_p / cd * ((r + d_t).ln() - sd * ln_r_eta);
        i3 = mu_p * (y_t / (cd * (r + d_t)) - ln_r_eta) + sd / cd * i4;
        i2 = mu_p * (-ln_r_eta) - i3;
        i1 = mu_p * (-xi / (cd * (r + d_t))) - sd / cd * i5;
    } else {
        let rd2 = (r + d_t) * (r + d_t);
        i1 = -mu_p / 2.0 * xi * q / rd2;
        i3 = mu_p / 2.0 * (eta / (r + d_t) + y_t * q / rd2 - ln_r_eta);
        i2 = mu_p * (-ln_r_eta) - i3;
        i4 = -mu_p * q / (r + d_t);
        i5 = -mu_p * xi * sd / (r + d_t);
    }

    // strike-slip
    let ss = [
        xi * q / r * inv_r_eta + theta + i1 * sd,
        y_t * q / r * inv_r_eta + q * cd * inv_r_eta + i2 * sd,
        d_t * q / r * inv_r_eta + q * sd * inv_r_eta + i4 * sd,
    ];
    // dip-slip
    let ds = [
        q / r - i3 * sd * cd,
        y_t * q / r * inv_r_xi + cd * theta - i1 * sd * cd,
        d_t * q / r * inv_r_xi + sd * theta - i5 * sd * cd,
    ];
    // tensile
    let xi_term = xi * q / r * inv_r_eta - theta;
    let tf = [
        q * q / r * inv_r_eta - i3 * sd * sd,
        -d_t * q / r * inv_r_xi - sd * xi_term - i1 * sd * sd,
        y_t * q / r * inv_r_xi + cd * xi_term - i5 * sd * sd,
    ];
    [ss, ds, tf]
}

/// Surface displacement at a single grid-frame offset from the fault centre,
/// in fault coordinates (x along strike, y horizontal updip, z up).
fn fault_frame_displacement(src: &OkadaSource, frame: &FaultFrame, x: f64, y: f64) -> [f64; 3] {
    let d = frame.d_bottom;
    let p = y * frame.cos_dip + d * frame.sin_dip;
    let two_pi = 2.0 * std::f64::consts::PI;

    // Chinnery's notation: f(x, p) - f(x, p - W) - f(x - L, p) + f(x - L, p - W)
    let corners = [
        (x, p, 1.0),
        (x, p - src.width_m, -1.0),
        (x - src.length_m, p, -1.0),
        (x - src.length_m, p - src.width_m, 1.0),
    ];

    let mut out = [0.0f64; 3];
    for (xi, eta, sign) in corners {
        let t = corner_terms(frame, xi, eta, y, d);
        for k in 0..3 {
            out[k] += sign
                * (-frame.u1 / two_pi * t[0][k] - frame.u2 / two_pi * t[1][k]
                    + frame.u3 / two_pi * t[2][k]);
        }
    }
    out
}

/// Displacement (east, north, up) at a single point offset (de, dn) metres
/// from the fault-centre surface projection.
pub fn okada_displacement_at(
    src: &OkadaSource,
    medium: &ElasticMedium,
    de: f64,
    dn: f64,
) -> [f64; 3] {
    let frame = FaultFrame::new(src, medium);
    let (x, y) = frame.to_fault_xy(src, de, dn);
    let u = fault_frame_displacement(src, &frame, x, y);
    fault_to_enu(&frame, u)
}

fn fault_to_enu(frame: &FaultFrame, u: [f64; 3]) -> [f64; 3] {
    // x axis azimuth = strike; y axis (updip) azimuth = strike - 90 deg.
    let ex = [frame.sin_strike, frame.cos_strike];
    let ey = [-frame.cos_strike, frame.sin_strike];
    [
        u[0] * ex[0] + u[1] * ey[0],
        u[0] * ex[1] + u[1] * ey[1],
        u[2],
    ]
}

/// Surface displacement of a rectangular shear/tensile dislocation.
pub fn okada_displacement(
    src: &OkadaSource,
    medium: &ElasticMedium,
    grid: &GridShape,
) -> Result<DisplacementField> {
    if !(src.depth_m > 0.0) {
        return Err(Error::InvalidSource(format!(
            "okada top-edge depth {} must be positive (dislocation intersects free surface)",
            src.depth_m
        )));
    }
    if !(src.length_m > 0.0 && src.width_m > 0.0) {
        return Err(Error::InvalidSource("okada length and width must be positive".into()));
    }
    let frame = FaultFrame::new(src, medium);
    let eps_offset = grid.spacing_m / 100.0;
    let mut field = DisplacementField::zeros(grid);
    for row in 0..grid.height {
        let dn = grid.y_of_row(row) - src.y_m;
        for col in 0..grid.width {
            let de = grid.x_of_col(col) - src.x_m;
            let (x, y) = frame.to_fault_xy(src, de, dn);
            let mut u = fault_frame_displacement(src, &frame, x, y);
            if !u.iter().all(|v| v.is_finite()) {
                // singular evaluation point on a fault-edge projection:
                // nudge by spacing/100
                u = fault_frame_displacement(src, &frame, x + eps_offset, y + eps_offset);
            }
            let enu = fault_to_enu(&frame, u);
            field.east.set(row, col, enu[0]);
            field.north.set(row, col, enu[1]);
            field.up.set(row, col, enu[2]);
        }
    }
    Ok(field)
}

/// Okada (1985) point-source surface displacement for potency
/// (slip or opening) x area at depth d. Inputs are in the same fault frame
/// as the rectangular source (x along strike, y horizontal updip); output is
/// (east, north, up). Used as an independent oracle for the finite source.
pub fn okada_point_displacement(
    medium: &ElasticMedium,
    strike_deg: f64,
    dip_deg: f64,
    depth_m: f64,
    potency_ss: f64,
    potency_ds: f64,
    potency_ts: f64,
    de: f64,
    dn: f64,
) -> [f64; 3] {
    let sd = dip_deg.to_radians().sin();
    let cd = dip_deg.to_radians().cos();
    let sin_strike = strike_deg.to_radians().sin();
    let cos_strike = strike_deg.to_radians().cos();
    let mu_p = 1.0 - 2.0 * medium.poisson_ratio;

    let x = de * sin_strike + dn * cos_strike;
    // +y is horizontal updip, pointing left of strike:
    let y = -(de * cos_strike) + dn * sin_strike;
    let d = depth_m;

    let r = (x * x + y * y + d * d).sqrt();
    let p = y * cd + d * sd;
    let q = y * sd - d * cd;
    let two_pi = 2.0 * std::f64::consts::PI;

    let rd = r + d;
    let i1 = mu_p * y * (1.0 / (r * rd * rd) - x * x * (3.0 * r + d) / (r.powi(3) * rd.powi(3)));
    let i2 = mu_p * x * (1.0 / (r * rd * rd) - y * y * (3.0 * r + d) / (r.powi(3) * rd.powi(3)));
    let i3 = mu_p * (x / r.powi(3)) - i2;
    let i4 = mu_p * (-x * y * (2.0 * r + d) / (r.powi(3) * rd * rd));
    let i5 = mu_p * (1.0 / (r * rd) - x * x * (2.0 * r + d) / (r.powi(3) * rd * rd));

    let r5 = r.powi(5);
    // strike-slip
    let ss = [
        3.0 * x * x * q / r5 + i1 * sd,
        3.0 * x * y * q / r5 + i2 * sd,
        3.0 * x * d * q / r5 + i4 * sd,
    ];
    // dip-slip
    let ds = [
        3.0 * x * p * q / r5 - i3 * sd * cd,
        3.0 * y * p * q / r5 - i1 * sd * cd,
        3.0 * d * p * q / r5 - i5 * sd * cd,
    ];
    // tensile
    let ts = [
        3.0 * x * q * q / r5 - i3 * sd * sd,
        3.0 * y * q * q / r5 - i1 * sd * sd,
        3.0 * d * q * q / r5 - i5 * sd * sd,
    ];

    let mut u = [0.0f64; 3];
    for k in 0..3 {
        u[k] = -potency_ss / two_pi * ss[k] - potency_ds / two_pi * ds[k]
            + potency_ts / two_pi * ts[k];
    }
    // rotate fault frame -> ENU
    let ex = [sin_strike, cos_strike];
    let ey = [-cos_strike, sin_strike];
    [u[0] * ex[0] + u[1] * ey[0], u[0] * ex[1] + u[1] * ey[1], u[2]]
}

//! Finite-difference reference for the driven elastic bar: explicit
//! central differences for ρ·u_tt + c·u_t = C·u_xx with a prescribed
//! displacement pulse at the left end and a traction-free right end.
//!
//! At unit Courant number the undamped scheme transports the pulse
//! exactly, which makes the solver a sharp oracle and not just an
//! approximate one.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::losses::Material;

/// Default left-end drive: one raised-cosine displacement pulse over
/// t ∈ [0, 0.3], zero afterwards.
pub fn raised_cosine(t: f64) -> f64 {
    if (0.0..=0.3).contains(&t) {
        0.5 * (1.0 - (2.0 * PI * t / 0.3).cos())
    } else {
        0.0
    }
}

pub struct WaveConfig {
    pub x0: f64,
    pub length: f64,
    pub duration: f64,
    /// Number of spatial cells (nx + 1 grid points).
    pub nx: usize,
    /// Courant number v·Δt/Δx used to pick the time step; 1 is the
    /// stability limit and, without damping, the exact-transport choice.
    pub courant: f64,
    /// Only `rho`, `damping`, and `stiffness` are read.
    pub material: Material,
    pub drive: Box<dyn Fn(f64) -> f64>,
}

impl WaveConfig {
    /// Raised-cosine pulse into a unit-property bar.
    pub fn pulse(x0: f64, length: f64, duration: f64, nx: usize) -> WaveConfig {
        WaveConfig {
            x0,
            length,
            duration,
            nx,
            courant: 0.9,
            material: Material::new(1.0, 0.0),
            drive: Box::new(raised_cosine),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 2 {
            return Err(Error::Config("need at least 2 spatial cells".into()));
        }
        if !(self.length > 0.0) || !(self.duration > 0.0) {
            return Err(Error::Config(
                "bar length and duration must be positive".into(),
            ));
        }
        if !(0.0 < self.courant && self.courant <= 1.0) {
            return Err(Error::Config("courant number must be in (0, 1]".into()));
        }
        if !(self.material.rho > 0.0) || !(self.material.stiffness > 0.0) {
            return Err(Error::Config(
                "density and stiffness must be positive".into(),
            ));
        }
        if self.material.damping < 0.0 {
            return Err(Error::Config("damping must be non-negative".into()));
        }
        Ok(())
    }
}

/// Space-time solution on a uniform grid; row n holds time n·Δt.
pub struct WaveGrid {
    pub x0: f64,
    pub dx: f64,
    pub dt: f64,
    pub u: Array2<f64>,
}

impl WaveGrid {
    pub fn nx(&self) -> usize {
        self.u.ncols() - 1
    }

    pub fn nt(&self) -> usize {
        self.u.nrows() - 1
    }

    pub fn length(&self) -> f64 {
        self.dx * self.nx() as f64
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.nt() as f64
    }

    /// Bilinear interpolation; coordinates are clamped to the grid.
    pub fn sample(&self, x: f64, t: f64) -> f64 {
        let fx = ((x - self.x0) / self.dx).clamp(0.0, self.nx() as f64);
        let ft = (t / self.dt).clamp(0.0, self.nt() as f64);
        let (i, j) = (ft as usize, fx as usize);
        let (i1, j1) = (i.min(self.nt() - 1) + 1, j.min(self.nx() - 1) + 1);
        let (wt, wx) = (ft - (i1 - 1) as f64, fx - (j1 - 1) as f64);
        let (a, b) = (self.u[(i1 - 1, j1 - 1)], self.u[(i1 - 1, j1)]);
        let (c, d) = (self.u[(i1, j1 - 1)], self.u[(i1, j1)]);
        (a * (1.0 - wx) + b * wx) * (1.0 - wt) + (c * (1.0 - wx) + d * wx) * wt
    }

    /// Serialize as CSV: a `nx,nt,dx,dt` header with its value row, then one
    /// row of grid values per time level. The file always describes the grid
    /// anchored at x = 0; a grid whose `x0` differs records only its spacing,
    /// and readers get the origin from the problem they pair the file with.
    pub fn csv(&self) -> String {
        let mut out = String::from("nx,nt,dx,dt\n");
        out.push_str(&format!(
            "{},{},{:.17e},{:.17e}\n",
            self.nx(),
            self.nt(),
            self.dx,
            self.dt
        ));
        for row in self.u.rows() {
            let fields: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn read_csv(text: &str) -> Result<WaveGrid> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l.trim());
        if header != Some("nx,nt,dx,dt") {
            return Err(Error::parse(1, "expected a 'nx,nt,dx,dt' header"));
        }
        let (_, meta) = lines
            .next()
            .ok_or_else(|| Error::parse(2, "missing the header value row"))?;
        let fields: Vec<&str> = meta.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(2, "expected 4 header values"));
        }
        let bad = |ln: usize, f: &str| Error::parse(ln, format!("bad number '{f}'"));
        let nx: usize = fields[0].parse().map_err(|_| bad(2, fields[0]))?;
        let nt: usize = fields[1].parse().map_err(|_| bad(2, fields[1]))?;
        let dx: f64 = fields[2].parse().map_err(|_| bad(2, fields[2]))?;
        let dt: f64 = fields[3].parse().map_err(|_| bad(2, fields[3]))?;
        let mut u = Array2::zeros((nt + 1, nx + 1));
        let mut rows = 0;
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if rows > nt {
                return Err(Error::parse(ln + 1, "more rows than the header declares"));
            }
            let vals: Vec<&str> = line.split(',').collect();
            if vals.len() != nx + 1 {
                return Err(Error::parse(
                    ln + 1,
                    format!("expected {} values, found {}", nx + 1, vals.len()),
                ));
            }
            for (j, f) in vals.iter().enumerate() {
                u[(rows, j)] = f.parse().map_err(|_| bad(ln + 1, f))?;
            }
            rows += 1;
        }
        if rows != nt + 1 {
            return Err(Error::parse(
                0,
                format!("expected {} grid rows, found {rows}", nt + 1),
            ));
        }
        Ok(WaveGrid {
            x0: 0.0,
            dx,
            dt,
            u,
        })
    }
}

/// March the explicit scheme over the full duration.
pub fn solve_wave(cfg: &WaveConfig) -> Result<WaveGrid> {
    cfg.validate()?;
    let (rho, damp, stiff) = (
        cfg.material.rho,
        cfg.material.damping,
        cfg.material.stiffness,
    );
    let speed = (stiff / rho).sqrt();
    let dx = cfg.length / cfg.nx as f64;
    let dt_target = cfg.courant * dx / speed;
    let nt = (cfg.duration / dt_target).ceil() as usize;
    let dt = cfg.duration / nt as f64;

    let nx = cfg.nx;
    let mut u = Array2::zeros((nt + 1, nx + 1));
    // Zero initial displacement and velocity; the drive value pins the
    // left node at every level, including the first two.
    u[(0, 0)] = (cfg.drive)(0.0);
    u[(1, 0)] = (cfg.drive)(dt);
    let r = stiff / (dx * dx);
    let a0 = rho / (dt * dt) + damp / (2.0 * dt);
    let a1 = rho / (dt * dt);
    let a2 = rho / (dt * dt) - damp / (2.0 * dt);
    for n in 1..nt {
        for i in 1..=nx {
            // Mirror ghost node past the free end keeps u_x(L) = 0.
            let right = if i == nx { u[(n, nx - 1)] } else { u[(n, i + 1)] };
            let uxx = r * (right - 2.0 * u[(n, i)] + u[(n, i - 1)]);
            u[(n + 1, i)] = (uxx + 2.0 * a1 * u[(n, i)] - a2 * u[(n - 1, i)]) / a0;
        }
        u[(n + 1, 0)] = (cfg.drive)((n + 1) as f64 * dt);
    }
    Ok(WaveGrid {
        x0: cfg.x0,
        dx,
        dt,
        u,
    })
}

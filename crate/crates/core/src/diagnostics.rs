//! Per-step ledger rows, invariant checks over them, and the two on-disk
//! artifacts: the time-series CSV and plain-text field dumps.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{Grid, ScalarField};
use crate::materials::Params;
use crate::real::Real;
use crate::state::{mass, total_energy, State, StepReport};
use crate::stepper::StepSink;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DiagError + '_ {
    move |source| DiagError::Io { path: path.to_path_buf(), source }
}

/// One line of the time series. Row 0 describes the initial state and carries
/// zero dissipation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LedgerRow {
    pub step: usize,
    pub time: f64,
    pub kinetic: f64,
    pub exchange: f64,
    pub penalty: f64,
    pub interface: f64,
    pub mixing: f64,
    pub total: f64,
    pub viscous: f64,
    pub chemical: f64,
    pub magnetic: f64,
    pub energy_violation: f64,
    pub mass: f64,
    pub max_abs_phi: f64,
    pub max_div: f64,
    pub m_l2: f64,
    /// `L^r` norm of `|M|` with the recorder's exponent (8 by default).
    pub m_lr: f64,
    pub m_linf: f64,
    pub picard_iters: usize,
    pub wall_time: f64,
}

pub const LEDGER_COLUMNS: [&str; 20] = [
    "step",
    "time",
    "kinetic",
    "exchange",
    "penalty",
    "interface",
    "mixing",
    "total",
    "viscous",
    "chemical",
    "magnetic",
    "energy_violation",
    "mass",
    "max_abs_phi",
    "max_div",
    "m_l2",
    "m_lr",
    "m_linf",
    "picard_iters",
    "wall_time",
];

impl LedgerRow {
    fn monitors<T: Real>(mut self, state: &State<T>, r: T) -> Self {
        let g = &state.grid;
        self.mass = mass(g, &state.phi).as_f64();
        self.max_abs_phi = state.phi.max_abs().as_f64();
        self.max_div = state.max_div().as_f64();
        self.m_l2 = state.m.lr_norm(g, T::lit(2.0)).as_f64();
        self.m_lr = state.m.lr_norm(g, r).as_f64();
        self.m_linf = state.m.max_norm().as_f64();
        self
    }

    pub fn initial<T: Real>(state: &State<T>, params: &Params<T>, r: T) -> Self {
        let e = total_energy(state, params).to_f64();
        LedgerRow {
            kinetic: e.kinetic,
            exchange: e.exchange,
            penalty: e.penalty,
            interface: e.interface,
            mixing: e.mixing,
            total: e.total,
            ..LedgerRow::default()
        }
        .monitors(state, r)
    }

    pub fn from_step<T: Real>(step: usize, time: T, state: &State<T>, report: &StepReport<T>, r: T, wall_time: f64) -> Self {
        let e = report.energy_after.to_f64();
        LedgerRow {
            step,
            time: time.as_f64(),
            kinetic: e.kinetic,
            exchange: e.exchange,
            penalty: e.penalty,
            interface: e.interface,
            mixing: e.mixing,
            total: e.total,
            viscous: report.dissipation.viscous.as_f64(),
            chemical: report.dissipation.chemical.as_f64(),
            magnetic: report.dissipation.magnetic.as_f64(),
            energy_violation: report.energy_violation.as_f64(),
            picard_iters: report.picard_iters,
            wall_time,
            ..LedgerRow::default()
        }
        .monitors(state, r)
    }

    pub fn dissipation(&self) -> f64 {
        self.viscous + self.chemical + self.magnetic
    }

    fn floats(&self) -> [f64; 18] {
        [
            self.time,
            self.kinetic,
            self.exchange,
            self.penalty,
            self.interface,
            self.mixing,
            self.total,
            self.viscous,
            self.chemical,
            self.magnetic,
            self.energy_violation,
            self.mass,
            self.max_abs_phi,
            self.max_div,
            self.m_l2,
            self.m_lr,
            self.m_linf,
            self.wall_time,
        ]
    }

    pub fn to_csv(&self) -> String {
        let f = self.floats();
        let mut out = self.step.to_string();
        for x in &f[..17] {
            out.push_str(&format!(",{x:.16e}"));
        }
        out.push_str(&format!(",{},{:.16e}", self.picard_iters, f[17]));
        out
    }

    pub fn from_csv(line: &str) -> Result<Self, String> {
        let cells: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
        if cells.len() != LEDGER_COLUMNS.len() {
            return Err(format!("expected {} columns, found {}", LEDGER_COLUMNS.len(), cells.len()));
        }
        let int = |i: usize| cells[i].parse::<usize>().map_err(|e| format!("column {}: {e}", LEDGER_COLUMNS[i]));
        let num = |i: usize| cells[i].parse::<f64>().map_err(|e| format!("column {}: {e}", LEDGER_COLUMNS[i]));
        Ok(LedgerRow {
            step: int(0)?,
            time: num(1)?,
            kinetic: num(2)?,
            exchange: num(3)?,
            penalty: num(4)?,
            interface: num(5)?,
            mixing: num(6)?,
            total: num(7)?,
            viscous: num(8)?,
            chemical: num(9)?,
            magnetic: num(10)?,
            energy_violation: num(11)?,
            mass: num(12)?,
            max_abs_phi: num(13)?,
            max_div: num(14)?,
            m_l2: num(15)?,
            m_lr: num(16)?,
            m_linf: num(17)?,
            picard_iters: int(18)?,
            wall_time: num(19)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Pass,
    /// First offending row and by how much its bound is exceeded.
    Fail { index: usize, step: usize, excess: f64 },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// Checks `E(t_n) + sum_{k<=n} h_k D_k <= E(t_0) + n tol` for every row, with
/// `h_k` taken from consecutive times.
pub fn check_energy_ledger(rows: &[LedgerRow], tol: f64) -> Verdict {
    let Some(first) = rows.first() else {
        return Verdict::Pass;
    };
    let mut dissipated = 0.0;
    for (n, w) in rows.windows(2).enumerate() {
        let h = w[1].time - w[0].time;
        dissipated += h * w[1].dissipation();
        let excess = w[1].total + dissipated - first.total - (n + 1) as f64 * tol;
        if excess > 0.0 {
            return Verdict::Fail { index: n + 1, step: w[1].step, excess };
        }
    }
    Verdict::Pass
}

fn growth_check(rows: &[LedgerRow], bound: impl Fn(f64) -> f64) -> Verdict {
    let Some(first) = rows.first() else {
        return Verdict::Pass;
    };
    for (i, r) in rows.iter().enumerate() {
        let t = r.time - first.time;
        for (now, start) in [(r.m_lr, first.m_lr), (r.m_linf, first.m_linf)] {
            let limit = start * bound(t);
            if now > limit {
                return Verdict::Fail { index: i, step: r.step, excess: now - limit };
            }
        }
    }
    Verdict::Pass
}

/// `|M(t)| <= (1 + slack) |M_0| exp(delta t)` in `L^r` and `L^inf`, with
/// `delta = c2 / alpha^2`.
pub fn check_m_growth<T: Real>(rows: &[LedgerRow], params: &Params<T>, slack: f64) -> Verdict {
    let delta = params.growth_rate().as_f64();
    growth_check(rows, |t| (1.0 + slack) * (delta * t).exp())
}

/// Rate-slack variant: `|M(t)| <= |M_0| exp((1 + theta) delta t)`.
pub fn check_m_growth_rate<T: Real>(rows: &[LedgerRow], params: &Params<T>, theta: f64) -> Verdict {
    let delta = params.growth_rate().as_f64();
    growth_check(rows, |t| ((1.0 + theta) * delta * t).exp())
}

/// Writes the CSV header on creation and flushes after every row.
pub struct TimeseriesWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TimeseriesWriter {
    pub fn create(path: &Path) -> Result<Self, DiagError> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = TimeseriesWriter { path: path.to_path_buf(), out: BufWriter::new(file) };
        let header = LEDGER_COLUMNS.join(",");
        w.line(&header)?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<(), DiagError> {
        let path = &self.path;
        self.out.write_all(s.as_bytes()).and_then(|_| self.out.write_all(b"\n")).and_then(|_| self.out.flush()).map_err(io_err(path))
    }

    pub fn write_row(&mut self, row: &LedgerRow) -> Result<(), DiagError> {
        self.line(&row.to_csv())
    }
}

pub fn write_timeseries(rows: &[LedgerRow], path: &Path) -> Result<(), DiagError> {
    let mut w = TimeseriesWriter::create(path)?;
    rows.iter().try_for_each(|r| w.write_row(r))
}

pub fn parse_timeseries(text: &str) -> Result<Vec<LedgerRow>, DiagError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == LEDGER_COLUMNS.join(",") => {}
        _ => return Err(DiagError::Parse { line: 1, message: "missing or unexpected header".into() }),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| LedgerRow::from_csv(l).map_err(|message| DiagError::Parse { line: i + 1, message }))
        .collect()
}

pub fn read_timeseries(path: &Path) -> Result<Vec<LedgerRow>, DiagError> {
    parse_timeseries(&std::fs::read_to_string(path).map_err(io_err(path))?)
}

/// First 16 hex digits of SHA-256 over the parameter values.
pub fn params_hash<T: Real>(params: &Params<T>) -> String {
    let p = params.cast::<f64>();
    let values = [
        p.eta, p.alpha, p.a, p.b, p.kappa, p.xi1, p.xi2, p.eta_blend, p.nu1, p.nu2, p.rho1, p.rho2,
    ];
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn table<T: Real>(out: &mut String, name: &str, values: &[T], width: usize) {
    out.push_str(&format!("[{name}]\n"));
    for row in values.chunks(width) {
        let cells: Vec<String> = row.iter().map(|x| format!("{:.16e}", x.as_f64())).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
}

/// Text of a field dump: `key = value` header lines, then one section per
/// field. Rows run from `j = 0` (bottom) upwards, `i` increases along a row.
/// Cell fields have `nx` columns, `u` has `nx + 1`, `v` has `nx` and `ny + 1` rows.
pub fn format_field_dump<T: Real>(state: &State<T>, params: &Params<T>, step: usize, time: T) -> String {
    let g: &Grid<T> = &state.grid;
    let mut out = String::from("# ferrosim field dump\n");
    out.push_str(&format!("nx = {}\nny = {}\n", g.nx(), g.ny()));
    out.push_str(&format!("lx = {:.16e}\nly = {:.16e}\n", g.lx().as_f64(), g.ly().as_f64()));
    out.push_str(&format!("step = {step}\ntime = {:.16e}\n", time.as_f64()));
    out.push_str(&format!("params_hash = {}\n", params_hash(params)));
    let cells: [(&str, &ScalarField<T>); 6] = [
        ("phi", &state.phi),
        ("mu", &state.mu),
        ("p", &state.p),
        ("m1", &state.m.comps[0]),
        ("m2", &state.m.comps[1]),
        ("m3", &state.m.comps[2]),
    ];
    for (name, f) in cells {
        table(&mut out, name, &f.values, g.nx());
    }
    table(&mut out, "u", &state.v.u, g.nx() + 1);
    table(&mut out, "v", &state.v.v, g.nx());
    out
}

pub fn write_field_dump<T: Real>(state: &State<T>, params: &Params<T>, step: usize, time: T, path: &Path) -> Result<(), DiagError> {
    let text = format_field_dump(state, params, step, time);
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).and_then(|_| f.flush()).map_err(io_err(path))
}

/// [`StepSink`] writing the time series and scheduled field dumps. Keeps every
/// row in memory for the ledger checks.
pub struct Recorder<T> {
    params: Params<T>,
    r: T,
    timeseries: Option<TimeseriesWriter>,
    fields_dir: Option<PathBuf>,
    dump_every: usize,
    last: Instant,
    pub rows: Vec<LedgerRow>,
}

impl<T: Real> Recorder<T> {
    /// In-memory recorder with the default exponent `r = 8`.
    pub fn new(initial: &State<T>, params: &Params<T>) -> Self {
        Self::with_exponent(initial, params, T::lit(8.0))
    }

    pub fn with_exponent(initial: &State<T>, params: &Params<T>, r: T) -> Self {
        Recorder {
            params: *params,
            r,
            timeseries: None,
            fields_dir: None,
            dump_every: 0,
            last: Instant::now(),
            rows: vec![LedgerRow::initial(initial, params, r)],
        }
    }

    /// Starts the CSV at `path` with the initial row already written.
    pub fn timeseries(mut self, path: &Path) -> Result<Self, DiagError> {
        let mut w = TimeseriesWriter::create(path)?;
        w.write_row(&self.rows[0])?;
        self.timeseries = Some(w);
        Ok(self)
    }

    /// Dumps the initial state now and every `every` steps (0 disables).
    pub fn field_dumps(mut self, dir: &Path, every: usize, initial: &State<T>) -> Result<Self, DiagError> {
        self.fields_dir = Some(dir.to_path_buf());
        self.dump_every = every;
        if every > 0 {
            write_field_dump(initial, &self.params, 0, T::zero(), &dump_path(dir, 0))?;
        }
        Ok(self)
    }
}

pub fn dump_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("step_{step:06}.txt"))
}

impl<T: Real> StepSink<T> for Recorder<T> {
    fn record(&mut self, step: usize, time: T, state: &State<T>, report: &StepReport<T>) -> Result<(), String> {
        let now = Instant::now();
        let row = LedgerRow::from_step(step, time, state, report, self.r, (now - self.last).as_secs_f64());
        self.last = now;
        if let Some(w) = self.timeseries.as_mut() {
            w.write_row(&row).map_err(|e| e.to_string())?;
        }
        if let Some(dir) = &self.fields_dir {
            if self.dump_every > 0 && step % self.dump_every == 0 {
                write_field_dump(state, &self.params, step, time, &dump_path(dir, step)).map_err(|e| e.to_string())?;
            }
        }
        self.rows.push(row);
        Ok(())
    }
}

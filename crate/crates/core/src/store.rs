//! On-disk run records: snapshot series in a flat little-endian binary
//! format with a CSV index, plus the per-step energy table.
//!
//! The binary layout is deliberately dumb — a fixed header, then each
//! snapshot as raw `f64` runs in field order — so a record can be
//! reread byte-for-byte and two deterministic runs can be compared with
//! `cmp`. All CSV floats carry 17 significant digits, enough to round-trip
//! a double exactly.

use std::fs;
use std::io::Write as IoWrite;
use std::path::Path;

use crate::coupling::{CoupledStepReport, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, PlateField, Role, ScalarField, VectorField};

const MAGIC: &[u8; 8] = b"PLFREC01";

/// One stored instant of a coupled run.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub eta: PlateField,
    pub w: PlateField,
    pub v: VectorField,
    pub p: ScalarField,
}

/// A uniformly strided series of snapshots from one simulation.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub grid: GridSpec,
    /// Stepper time step of the run that produced the record.
    pub dt: f64,
    /// Steps between consecutive snapshots.
    pub stride: usize,
    pub snapshots: Vec<Snapshot>,
}

impl RunRecord {
    pub fn new(grid: GridSpec, dt: f64, stride: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("record step must be positive and finite"));
        }
        if stride == 0 {
            return Err(Error::config("snapshot stride must be at least 1"));
        }
        Ok(RunRecord {
            grid,
            dt,
            stride,
            snapshots: Vec::new(),
        })
    }

    /// Time between consecutive snapshots.
    pub fn sample_dt(&self) -> f64 {
        self.dt * self.stride as f64
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn push(&mut self, snap: Snapshot) -> Result<()> {
        if snap.eta.grid != self.grid
            || snap.w.grid != self.grid
            || snap.v.grid() != self.grid
            || snap.p.grid != self.grid
        {
            return Err(Error::shape("snapshot fields live on a different grid"));
        }
        if snap.p.role != Role::Center {
            return Err(Error::shape("snapshot pressure must be cell-centered"));
        }
        self.snapshots.push(snap);
        Ok(())
    }

    fn snapshot_bytes(&self) -> u64 {
        let g = self.grid;
        let doubles = 1
            + 2 * (g.nx + 1)
            + (g.nx + 1) * g.ny
            + g.nx * (g.ny + 1)
            + g.nx * g.ny;
        8 * doubles as u64
    }

    /// Byte offset of snapshot `k` inside the binary file.
    pub fn offset(&self, k: usize) -> u64 {
        HEADER_BYTES + k as u64 * self.snapshot_bytes()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::with_capacity(
            HEADER_BYTES as usize + self.len() * self.snapshot_bytes() as usize,
        );
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.grid.nx as u64).to_le_bytes());
        buf.extend_from_slice(&(self.grid.ny as u64).to_le_bytes());
        buf.extend_from_slice(&self.grid.length.to_le_bytes());
        buf.extend_from_slice(&self.dt.to_le_bytes());
        buf.extend_from_slice(&(self.stride as u64).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for snap in &self.snapshots {
            buf.extend_from_slice(&snap.time.to_le_bytes());
            for x in snap.eta.values() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            for x in snap.w.values() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            for x in snap.v.u.values() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            for x in snap.v.v.values() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            for x in snap.p.values() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunRecord> {
        let bytes = fs::read(path)?;
        let mut cur = Cursor::new(&bytes);
        if cur.take(8)? != MAGIC {
            return Err(Error::Format(format!(
                "{} is not a run record (bad magic)",
                path.display()
            )));
        }
        let nx = cur.u64()? as usize;
        let ny = cur.u64()? as usize;
        let length = cur.f64()?;
        let dt = cur.f64()?;
        let stride = cur.u64()? as usize;
        let count = cur.u64()? as usize;
        let grid = GridSpec::new(nx, ny, length)?;
        let mut rec = RunRecord::new(grid, dt, stride)?;
        for _ in 0..count {
            let time = cur.f64()?;
            let mut eta = PlateField::zeros(grid);
            cur.fill(eta.values_mut())?;
            let mut w = PlateField::zeros(grid);
            cur.fill(w.values_mut())?;
            let mut v = VectorField::zeros(grid);
            cur.fill(v.u.values_mut())?;
            cur.fill(v.v.values_mut())?;
            let mut p = ScalarField::zeros(grid, Role::Center);
            cur.fill(p.values_mut())?;
            rec.push(Snapshot { time, eta, w, v, p })?;
        }
        if !cur.done() {
            return Err(Error::Format(format!(
                "{} has trailing bytes after the declared snapshots",
                path.display()
            )));
        }
        Ok(rec)
    }

    /// CSV index of the binary file: snapshot number, time, byte offset.
    pub fn write_index(&self, path: &Path) -> Result<()> {
        let mut out = String::from("snapshot,time,offset\n");
        for (k, snap) in self.snapshots.iter().enumerate() {
            out.push_str(&format!("{},{:.16e},{}\n", k, snap.time, self.offset(k)));
        }
        fs::write(path, out)?;
        Ok(())
    }
}

const HEADER_BYTES: u64 = 8 + 6 * 8;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("run record is truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fill(&mut self, dst: &mut [f64]) -> Result<()> {
        for x in dst.iter_mut() {
            *x = self.f64()?;
        }
        Ok(())
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// One line of the energy table.
#[derive(Debug, Clone, Copy)]
pub struct EnergyRow {
    pub time: f64,
    pub fluid_kinetic: f64,
    pub plate_kinetic: f64,
    pub plate_elastic: f64,
    pub total: f64,
    pub plate_load_work: f64,
    pub plate_dissipated: f64,
    pub fluid_dissipation: f64,
    pub body_work: f64,
    pub lambda: f64,
    pub load_residual: f64,
    pub flux_defect: f64,
    pub post_divergence: f64,
    pub subiterations: usize,
    pub pressure_iterations: usize,
    pub cfl: f64,
}

/// Build the table: one leading row for the initial state, then one row
/// per step.
pub fn energy_rows(
    t0: f64,
    initial: &EnergyBreakdown,
    reports: &[CoupledStepReport],
) -> Vec<EnergyRow> {
    let mut rows = Vec::with_capacity(reports.len() + 1);
    rows.push(EnergyRow {
        time: t0,
        fluid_kinetic: initial.fluid_kinetic,
        plate_kinetic: initial.plate_kinetic,
        plate_elastic: initial.plate_elastic,
        total: initial.total(),
        plate_load_work: 0.0,
        plate_dissipated: 0.0,
        fluid_dissipation: 0.0,
        body_work: 0.0,
        lambda: 0.0,
        load_residual: 0.0,
        flux_defect: 0.0,
        post_divergence: 0.0,
        subiterations: 0,
        pressure_iterations: 0,
        cfl: 0.0,
    });
    for r in reports {
        rows.push(EnergyRow {
            time: r.state.time,
            fluid_kinetic: r.energy.fluid_kinetic,
            plate_kinetic: r.energy.plate_kinetic,
            plate_elastic: r.energy.plate_elastic,
            total: r.energy.total(),
            plate_load_work: r.plate_load_work,
            plate_dissipated: r.plate_dissipated,
            fluid_dissipation: r.fluid_dissipation,
            body_work: r.body_work,
            lambda: r.lambda,
            load_residual: r.load_residual,
            flux_defect: r.flux_defect,
            post_divergence: r.post_divergence,
            subiterations: r.subiterations,
            pressure_iterations: r.pressure_iterations,
            cfl: r.cfl,
        });
    }
    rows
}

pub fn write_energy_csv(path: &Path, rows: &[EnergyRow]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(
        out,
        "time,fluid_kinetic,plate_kinetic,plate_elastic,total,plate_load_work,\
         plate_dissipated,fluid_dissipation,body_work,lambda,load_residual,\
         flux_defect,post_divergence,subiterations,pressure_iterations,cfl"
    )?;
    for r in rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{:.16e}",
            r.time,
            r.fluid_kinetic,
            r.plate_kinetic,
            r.plate_elastic,
            r.total,
            r.plate_load_work,
            r.plate_dissipated,
            r.fluid_dissipation,
            r.body_work,
            r.lambda,
            r.load_residual,
            r.flux_defect,
            r.post_divergence,
            r.subiterations,
            r.pressure_iterations,
            r.cfl
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hashy(k: f64) -> impl Fn(f64, f64) -> f64 {
        move |x, y| (13.37 * (3.1 * x + 1.7 * y + k)).sin()
    }

    fn sample_record() -> RunRecord {
        let g = GridSpec::new(10, 8, 1.0).unwrap();
        let mut rec = RunRecord::new(g, 1e-3, 5).unwrap();
        for k in 0..3 {
            let kf = k as f64;
            rec.push(Snapshot {
                time: kf * rec.sample_dt(),
                eta: PlateField::from_fn(g, |x| 1.0 + 0.1 * (x + kf).sin()),
                w: PlateField::from_fn(g, |x| 0.3 * (2.0 * x - kf).cos()),
                v: VectorField::from_fn(g, hashy(kf), hashy(kf + 0.5)),
                p: ScalarField::from_fn(g, Role::Center, hashy(kf + 1.5)),
            })
            .unwrap();
        }
        rec
    }

    #[test]
    fn binary_round_trip_preserves_every_bit() {
        let rec = sample_record();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.bin");
        rec.save(&path).unwrap();
        let back = RunRecord::load(&path).unwrap();
        assert_eq!(back.grid, rec.grid);
        assert_eq!(back.dt, rec.dt);
        assert_eq!(back.stride, rec.stride);
        assert_eq!(back.len(), rec.len());
        for (a, b) in rec.snapshots.iter().zip(&back.snapshots) {
            assert_eq!(a.time.to_bits(), b.time.to_bits());
            for (x, y) in a.eta.values().iter().zip(b.eta.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.v.u.values().iter().zip(b.v.u.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.p.values().iter().zip(b.p.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn index_offsets_land_on_snapshot_times() {
        let rec = sample_record();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.bin");
        rec.save(&path).unwrap();
        rec.write_index(&dir.path().join("run.csv")).unwrap();
        let bytes = fs::read(&path).unwrap();
        for k in 0..rec.len() {
            let off = rec.offset(k) as usize;
            let t = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            assert_eq!(t.to_bits(), rec.snapshots[k].time.to_bits());
        }
        let index = fs::read_to_string(dir.path().join("run.csv")).unwrap();
        assert_eq!(index.lines().count(), rec.len() + 1);
    }

    #[test]
    fn loader_rejects_mangled_files() {
        let rec = sample_record();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.bin");
        rec.save(&path).unwrap();

        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        let bad_magic = dir.path().join("magic.bin");
        fs::write(&bad_magic, &bytes).unwrap();
        assert!(matches!(
            RunRecord::load(&bad_magic),
            Err(Error::Format(_))
        ));

        let bytes = fs::read(&path).unwrap();
        let truncated = dir.path().join("short.bin");
        fs::write(&truncated, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(
            RunRecord::load(&truncated),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn energy_table_carries_seventeen_digit_floats() {
        let g = GridSpec::new(10, 8, 1.0).unwrap();
        let rec = RunRecord::new(g, 1e-3, 1).unwrap();
        assert_eq!(rec.sample_dt(), 1e-3);
        let initial = EnergyBreakdown {
            fluid_kinetic: 1.0 / 3.0,
            plate_kinetic: 0.0,
            plate_elastic: 2.0 / 7.0,
        };
        let rows = energy_rows(0.0, &initial, &[]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("energy.csv");
        write_energy_csv(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("time,fluid_kinetic"));
        let first = lines.next().unwrap();
        let cols: Vec<&str> = first.split(',').collect();
        assert_eq!(cols.len(), 16);
        let kin: f64 = cols[1].parse().unwrap();
        assert_eq!(kin.to_bits(), (1.0f64 / 3.0).to_bits());
    }
}

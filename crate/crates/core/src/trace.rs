//! Trace files: one CSV per stream plus a JSON meta document.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a trace
//! back yields bit-identical values.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::behaviour::SoundEvent;
use crate::config::SessionConfig;
use crate::error::{Error, Result};
use crate::session::{ActuatorRow, PhysicsRow, SensorRow, SessionTrace};

pub const SENSOR_CSV: &str = "sensor.csv";
pub const ACTUATOR_CSV: &str = "actuator.csv";
pub const PHYSICS_CSV: &str = "physics.csv";
pub const META_JSON: &str = "meta.json";

#[derive(Serialize, Deserialize)]
struct Meta {
    config: SessionConfig,
    sound_events: Vec<SoundEvent>,
}

/// Write `trace` into directory `dir`, creating it if needed. Returns the
/// paths written.
pub fn export_trace(trace: &SessionTrace, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = vec![
        write_csv(&dir.join(SENSOR_CSV), &trace.sensor_rows)?,
        write_csv(&dir.join(ACTUATOR_CSV), &trace.actuator_rows)?,
        write_csv(&dir.join(PHYSICS_CSV), &trace.physics_rows)?,
        write_meta(dir, trace)?,
    ];
    Ok(paths)
}

pub fn import_trace(dir: &Path) -> Result<SessionTrace> {
    let meta_path = dir.join(META_JSON);
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta = serde_json::from_str(&text).map_err(|e| Error::format(&meta_path, e))?;
    Ok(SessionTrace {
        sensor_rows: read_csv(&dir.join(SENSOR_CSV))?,
        actuator_rows: read_csv(&dir.join(ACTUATOR_CSV))?,
        physics_rows: read_csv(&dir.join(PHYSICS_CSV))?,
        sound_events: meta.sound_events,
        meta: meta.config,
    })
}

fn write_csv<T: Serialize + Columns>(path: &Path, rows: &[T]) -> Result<PathBuf> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row).map_err(|e| Error::format(path, e))?;
    }
    if rows.is_empty() {
        // serde only emits the header alongside the first record
        w.write_record(T::HEADER).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Column names of a trace stream, in file order.
trait Columns {
    const HEADER: &'static [&'static str];
}

impl Columns for SensorRow {
    const HEADER: &'static [&'static str] = &["t", "raw_code", "proximity", "detected", "trigger_fired"];
}

impl Columns for ActuatorRow {
    const HEADER: &'static [&'static str] = &["t", "level", "u_q", "current"];
}

impl Columns for PhysicsRow {
    const HEADER: &'static [&'static str] = &["t", "z", "v", "force"];
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::format(path, e))
}

fn write_meta(dir: &Path, trace: &SessionTrace) -> Result<PathBuf> {
    let path = dir.join(META_JSON);
    let meta = Meta {
        config: trace.meta.clone(),
        sound_events: trace.sound_events.clone(),
    };
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &meta).map_err(|e| Error::format(&path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

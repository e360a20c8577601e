//! BOP results CSV: `scene_id,im_id,obj_id,score,R,t,time`, with `R` nine
//! space-separated row-major reals and `t` three reals in millimeters.

use std::path::Path;

use ppf_core::geom::RigidPose;
use ppf_core::Real;

use crate::error::{EvalError, Result};

pub const HEADER: [&str; 7] = ["scene_id", "im_id", "obj_id", "score", "R", "t", "time"];

#[derive(Debug, Clone, PartialEq)]
pub struct BopResult {
    pub scene_id: u32,
    pub im_id: u32,
    pub obj_id: u32,
    pub score: f64,
    pub r: [f64; 9],
    /// Millimeters.
    pub t: [f64; 3],
    /// Seconds; `-1` when unknown.
    pub time: f64,
}

impl BopResult {
    pub fn from_pose<S: Real>(scene_id: u32, im_id: u32, obj_id: u32, score: f64, pose: &RigidPose<S>, time: f64) -> Self {
        let t = pose.translation();
        Self {
            scene_id,
            im_id,
            obj_id,
            score,
            r: pose.rotation_matrix().to_row_major().map(|v| v.as_f64()),
            t: [t.x.as_f64() * 1e3, t.y.as_f64() * 1e3, t.z.as_f64() * 1e3],
            time,
        }
    }

    /// Pose in meters.
    pub fn pose<S: Real>(&self) -> RigidPose<S> {
        ppf_core::bop::pose_from_rt_mm(&self.r, &self.t)
    }

    fn is_finite(&self) -> bool {
        self.score.is_finite() && self.time.is_finite() && self.r.iter().chain(&self.t).all(|v| v.is_finite())
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Writes `rows` with a header line. Non-finite values are rejected before
/// anything is written.
pub fn write_bop_csv(path: &Path, rows: &[BopResult]) -> Result<()> {
    if rows.iter().any(|r| !r.is_finite()) {
        return Err(EvalError::NonFinite("BOP result row"));
    }
    let csv_err = |source| EvalError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.scene_id.to_string(),
            r.im_id.to_string(),
            r.obj_id.to_string(),
            r.score.to_string(),
            join(&r.r),
            join(&r.t),
            r.time.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_reals<const N: usize>(s: &str) -> Option<[f64; N]> {
    let v: Vec<f64> = s.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().ok()?;
    v.try_into().ok()
}

pub fn read_bop_csv(path: &Path) -> Result<Vec<BopResult>> {
    let mut rd = csv::Reader::from_path(path).map_err(|source| EvalError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i as u64 + 2;
        let fmt = |msg: String| EvalError::Format {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let rec = rec.map_err(|source| EvalError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if rec.len() != 7 {
            return Err(fmt(format!("expected 7 fields, found {}", rec.len())));
        }
        let int = |k: usize| rec[k].trim().parse::<u32>().map_err(|e| fmt(format!("{}: {e}", HEADER[k])));
        let real = |k: usize| rec[k].trim().parse::<f64>().map_err(|e| fmt(format!("{}: {e}", HEADER[k])));
        let row = BopResult {
            scene_id: int(0)?,
            im_id: int(1)?,
            obj_id: int(2)?,
            score: real(3)?,
            r: parse_reals(&rec[4]).ok_or_else(|| fmt("R needs 9 reals".into()))?,
            t: parse_reals(&rec[5]).ok_or_else(|| fmt("t needs 3 reals".into()))?,
            time: real(6)?,
        };
        if !row.is_finite() {
            return Err(fmt("non-finite value".into()));
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ppf_core::geom::Vec3;

    #[test]
    fn identity_pose_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let p = RigidPose::<f64>::from_translation(Vec3::new(0.0, 0.0, 1.0));
        write_bop_csv(&path, &[BopResult::from_pose(1, 2, 3, 0.5, &p, -1.0)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "scene_id,im_id,obj_id,score,R,t,time");
        assert_eq!(lines[1], "1,2,3,0.5,1 0 0 0 1 0 0 0 1,0 0 1000,-1");
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rows: Vec<BopResult> = (0..5)
            .map(|i| {
                let p = RigidPose::<f64>::from_axis_angle(
                    &Vec3::new(1.0, i as f64, 2.0),
                    0.3 * i as f64,
                    Vec3::new(0.01 * i as f64, -0.02, 0.8),
                );
                BopResult::from_pose(1, i, 7, 1.0 / (i + 1) as f64, &p, 0.125)
            })
            .collect();
        write_bop_csv(&path, &rows).unwrap();
        let back = read_bop_csv(&path).unwrap();
        assert_eq!(back, rows);
        for (a, b) in back.iter().zip(&rows) {
            assert!(a.pose::<f64>().approx_eq(&b.pose(), 1e-9, 1e-9));
        }
    }

    #[test]
    fn empty_and_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_bop_csv(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().trim(), HEADER.join(","));
        assert!(read_bop_csv(&path).unwrap().is_empty());
        let mut bad = BopResult::from_pose(1, 1, 1, f64::NAN, &RigidPose::<f64>::identity(), 0.0);
        assert!(matches!(write_bop_csv(&path, &[bad.clone()]), Err(EvalError::NonFinite(_))));
        bad.score = 1.0;
        write_bop_csv(&path, &[bad]).unwrap();
        std::fs::write(&path, "scene_id,im_id,obj_id,score,R,t,time\n1,1,1,1,1 0 0,0 0 0,0\n").unwrap();
        assert!(matches!(read_bop_csv(&path), Err(EvalError::Format { line: 2, .. })));
    }
}

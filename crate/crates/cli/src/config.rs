use std::path::PathBuf;

use ppf_core::icp::IcpParams;
use ppf_core::matching::MatchParams;
use serde_json::json;

/// Effective parameters of one detection run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub models_dir: PathBuf,
    pub match_params: MatchParams<f64>,
    pub icp: IcpParams<f64>,
    /// Rebuild stored models at this relative sampling step when it differs.
    pub tau_d: Option<f64>,
    /// Rebuild stored models with this angle bin count when it differs.
    pub n_angle: Option<u32>,
    pub refine: bool,
    pub symmetry: bool,
    /// Worker threads; 0 picks the number of cores.
    pub threads: usize,
    /// Write -1 in the time column instead of the measured wall time.
    pub fixed_time: bool,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            models_dir: PathBuf::from("models"),
            match_params: MatchParams::default(),
            icp: IcpParams::default(),
            tau_d: None,
            n_angle: None,
            refine: true,
            symmetry: true,
            threads: 0,
            fixed_time: false,
            out: PathBuf::from("results.csv"),
        }
    }
}

impl PipelineConfig {
    pub fn to_json(&self) -> serde_json::Value {
        let m = &self.match_params;
        let i = &self.icp;
        json!({
            "models_dir": self.models_dir,
            "out": self.out,
            "tau_d": self.tau_d,
            "n_angle": self.n_angle,
            "match": {
                "ref_sampling_stride": m.ref_sampling_stride,
                "peak_rel_threshold": m.peak_rel_threshold,
                "cluster_trans_thresh": m.cluster_trans_thresh,
                "cluster_rot_thresh_deg": m.cluster_rot_thresh.to_degrees(),
                "top_k_clusters": m.top_k_clusters,
                "mask_dilation": m.mask_dilation,
            },
            "icp": {
                "max_iters": i.max_iters,
                "corr_dist_start": i.corr_dist_start,
                "corr_dist_end": i.corr_dist_end,
                "converge_rot_deg": i.converge_rot.to_degrees(),
                "converge_trans": i.converge_trans,
            },
            "refine": self.refine,
            "symmetry": self.symmetry,
            "threads": self.threads,
            "fixed_time": self.fixed_time,
        })
    }
}

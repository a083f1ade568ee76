//! Resolving the run configuration and opening datasets.

use std::path::{Path, PathBuf};

use vio_geom::io::config::{load_layered, RunConfig};
use vio_geom::io::euroc::{mav_dir, parse_euroc};
use vio_geom::io::image::read_disparity_png16;
use vio_geom::io::kitti::parse_kitti_odometry;
use vio_geom::io::pfm::read_disparity_pfm;
use vio_geom::io::{Layout, SequenceManifest};
use vio_geom::stereo::{depth_band_filter, depth_to_pointcloud, disparity_to_depth};
use vio_geom::synth::EMITTED_CONFIG;
use vio_geom::{DepthMap, Error, PointCloud, Result, StereoRig};

/// Layers, lowest precedence first: built-in defaults, `config.toml` at
/// the dataset root, `--config`. `--seed` then replaces every seed.
pub fn resolve_config(explicit: Option<&Path>, dataset: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let dataset_cfg = dataset.map(|d| d.join(EMITTED_CONFIG)).filter(|p| p.is_file());
    let layers: Vec<&Path> = dataset_cfg.as_deref().into_iter().chain(explicit).collect();
    let mut cfg = load_layered(&layers)?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.synth.seed = s;
        cfg.degradation.seed = Some(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `mav0/` marks EuRoC, `sequences/` marks KITTI odometry.
pub fn detect_layout(root: &Path) -> Result<Layout> {
    if mav_dir(root).is_dir() {
        Ok(Layout::Euroc)
    } else if root.join("sequences").is_dir() {
        Ok(Layout::Kitti)
    } else {
        Err(Error::InvalidArgument(format!(
            "cannot tell the layout of {}; pass --layout",
            root.display()
        )))
    }
}

/// An opened dataset with its configuration.
pub struct Dataset {
    pub root: PathBuf,
    pub layout: Layout,
    pub manifest: SequenceManifest,
}

impl Dataset {
    pub fn open(root: &Path, layout: Option<Layout>, cfg: &RunConfig) -> Result<Self> {
        let layout = match layout {
            Some(l) => l,
            None => detect_layout(root)?,
        };
        let manifest = match layout {
            Layout::Kitti => parse_kitti_odometry(root, &cfg.kitti, &cfg.rig)?,
            Layout::Euroc => parse_euroc(root, cfg.rig.to_rig()?)?,
        };
        manifest.validate()?;
        Ok(Dataset {
            root: root.to_path_buf(),
            layout,
            manifest,
        })
    }

    pub fn rig(&self) -> &StereoRig {
        &self.manifest.rig
    }
}

/// Band-filtered depth and its point cloud for one frame.
pub fn load_frame(disparity: &Path, rig: &StereoRig, band: [f64; 2]) -> Result<(DepthMap, PointCloud)> {
    let disp = match disparity.extension().and_then(|e| e.to_str()) {
        Some("png") => read_disparity_png16(disparity)?,
        Some("pfm") => read_disparity_pfm(disparity)?,
        _ => {
            return Err(Error::Format(format!(
                "{}: disparity must be .png or .pfm",
                disparity.display()
            )))
        }
    };
    let depth = depth_band_filter(&disparity_to_depth(&disp, rig), band[0], band[1])?;
    let cloud = depth_to_pointcloud(&depth, &rig.intrinsics);
    Ok((depth, cloud))
}

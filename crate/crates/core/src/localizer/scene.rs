//! Simulated multi-reference scenes and their JSON interchange format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Rotation2, Rotation3, Unit, Vector2, Vector3};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CorrespondenceSet, Scene, SceneCorrespondence};
use crate::bench::{generate_correspondence, perturb, random_direction, NoiseSpec};
use crate::error::{Error, Result};
use crate::geometry::{random_rotation, AffineCorrespondence, OrientedPoint, Pose};
use crate::seeding::substream_rng;

pub const SCENE_VERSION: &str = "p1ac-scene/1";

const MAX_RELATIVE_ROTATION_DEG: f64 = 30.0;
const MAX_DRAWS_PER_CORRESPONDENCE: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub references: usize,
    pub correspondences: usize,
    /// Fraction of correspondences replaced by unrelated values, in `[0, 1)`.
    pub outlier_ratio: f64,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            references: 4,
            correspondences: 200,
            outlier_ratio: 0.5,
            noise: NoiseSpec::zero(),
            seed: 0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.outlier_ratio) {
            return Err(Error::InvalidArgument(format!(
                "outlier ratio must lie in [0, 1), got {}",
                self.outlier_ratio
            )));
        }
        if self.references == 0 || self.correspondences == 0 {
            return Err(Error::InvalidArgument("scene needs references and correspondences".into()));
        }
        self.noise.validate()
    }

    /// Outliers are `round(ratio · count)`.
    pub fn outlier_count(&self) -> usize {
        (self.outlier_ratio * self.correspondences as f64).round() as usize
    }
}

/// Query camera with a uniformly random world pose; each reference camera
/// is offset from it by a unit translation and a rotation of at most 30°.
/// Correspondences are spread round-robin over the references and built
/// with the synthetic problem generator; outliers get a random query point
/// and a random affine map.
pub fn simulate_scene(params: &SceneParams) -> Result<(Scene, CorrespondenceSet)> {
    params.validate()?;
    let mut rng = substream_rng(params.seed, "scene", 0);
    let mut noise_rng = substream_rng(params.seed, "scene-noise", 0);

    let truth = Pose::from_parts(random_rotation(&mut rng), random_direction(&mut rng) * rng.random_range(0.0..5.0));
    let relative: Vec<Pose<f64>> = (0..params.references)
        .map(|_| {
            let axis = Unit::new_normalize(random_direction(&mut rng));
            let angle = rng.random_range(0.0..MAX_RELATIVE_ROTATION_DEG).to_radians();
            Pose::from_parts(Rotation3::from_axis_angle(&axis, angle).into_inner(), random_direction(&mut rng))
        })
        .collect();
    // truth = relative ∘ reference
    let reference_poses: Vec<Pose<f64>> = relative.iter().map(|rel| rel.inverse().compose(&truth)).collect();

    let mut items = Vec::with_capacity(params.correspondences);
    for i in 0..params.correspondences {
        let reference = i % params.references;
        let mut problem = (0..MAX_DRAWS_PER_CORRESPONDENCE)
            .find_map(|_| generate_correspondence(&mut rng, &relative[reference]))
            .ok_or(Error::DegenerateConfiguration("could not place a correspondence"))?;
        perturb(&mut problem, &params.noise, &mut noise_rng);
        items.push(SceneCorrespondence {
            ac: problem.ac,
            point: problem.point,
            reference,
        });
    }

    let mut mask = vec![true; params.correspondences];
    for i in sample(&mut rng, params.correspondences, params.outlier_count()) {
        mask[i] = false;
        let c = &mut items[i];
        c.ac.y = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let rot = Rotation2::new(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).into_inner();
        c.ac.a = rot * Matrix2::from_diagonal(&Vector2::new(rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)));
    }

    let scene = Scene {
        reference_poses,
        oriented_points: items.iter().map(|c| c.point).collect(),
        query_truth: Some(truth),
    };
    let corrs = CorrespondenceSet {
        items,
        inlier_mask: Some(mask),
    };
    Ok((scene, corrs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    /// Row-major.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&Pose<f64>> for PoseRecord {
    fn from(p: &Pose<f64>) -> Self {
        let r = p.rotation;
        Self {
            rotation: std::array::from_fn(|k| r[(k / 3, k % 3)]),
            translation: [p.translation[0], p.translation[1], p.translation[2]],
        }
    }
}

impl PoseRecord {
    pub fn to_pose(&self) -> Result<Pose<f64>> {
        Pose::new(
            Matrix3::from_row_slice(&self.rotation),
            Vector3::from_column_slice(&self.translation),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PointRecord {
    x: [f64; 2],
    d: f64,
    n: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CorrespondenceRecord {
    x: [f64; 2],
    y: [f64; 2],
    /// Row-major.
    #[serde(rename = "A")]
    a: [f64; 4],
    #[serde(rename = "ref")]
    reference: usize,
}

/// Correspondence `i` pairs with oriented point `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SceneFile {
    version: String,
    reference_poses: Vec<PoseRecord>,
    oriented_points: Vec<PointRecord>,
    correspondences: Vec<CorrespondenceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    query_truth: Option<PoseRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inlier_mask: Option<Vec<bool>>,
}

pub fn save_scene<W: Write>(writer: W, scene: &Scene, corrs: &CorrespondenceSet) -> Result<()> {
    let file = SceneFile {
        version: SCENE_VERSION.to_string(),
        reference_poses: scene.reference_poses.iter().map(PoseRecord::from).collect(),
        oriented_points: corrs
            .items
            .iter()
            .map(|c| PointRecord {
                x: [c.point.x[0], c.point.x[1]],
                d: c.point.depth,
                n: [c.point.normal[0], c.point.normal[1], c.point.normal[2]],
            })
            .collect(),
        correspondences: corrs
            .items
            .iter()
            .map(|c| CorrespondenceRecord {
                x: [c.ac.x[0], c.ac.x[1]],
                y: [c.ac.y[0], c.ac.y[1]],
                a: [c.ac.a[(0, 0)], c.ac.a[(0, 1)], c.ac.a[(1, 0)], c.ac.a[(1, 1)]],
                reference: c.reference,
            })
            .collect(),
        query_truth: scene.query_truth.as_ref().map(PoseRecord::from),
        inlier_mask: corrs.inlier_mask.clone(),
    };
    let mut writer = writer;
    serde_json::to_writer_pretty(&mut writer, &file)?;
    writeln!(writer)?;
    Ok(())
}

pub fn save_scene_file(path: &Path, scene: &Scene, corrs: &CorrespondenceSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    save_scene(&mut w, scene, corrs)?;
    w.flush()?;
    Ok(())
}

pub fn load_scene_file(path: &Path) -> Result<(Scene, CorrespondenceSet)> {
    load_scene(BufReader::new(File::open(path)?))
}

/// Parses and validates a scene document.
pub fn load_scene<R: std::io::Read>(reader: R) -> Result<(Scene, CorrespondenceSet)> {
    let file: SceneFile = serde_json::from_reader(reader)?;
    if file.version != SCENE_VERSION {
        return Err(Error::InvalidArgument(format!("unsupported scene version '{}'", file.version)));
    }
    if file.reference_poses.is_empty() {
        return Err(Error::InvalidArgument("scene has no reference poses".into()));
    }
    if file.oriented_points.len() != file.correspondences.len() {
        return Err(Error::InvalidArgument("one oriented point per correspondence is required".into()));
    }
    let reference_poses = file
        .reference_poses
        .iter()
        .map(PoseRecord::to_pose)
        .collect::<Result<Vec<_>>>()?;
    let mut items = Vec::with_capacity(file.correspondences.len());
    for (p, c) in file.oriented_points.iter().zip(&file.correspondences) {
        let point = OrientedPoint::new(Vector2::from(p.x), p.d, Vector3::from(p.n))?;
        let ac = AffineCorrespondence::new(Vector2::from(c.x), Vector2::from(c.y), Matrix2::from_row_slice(&c.a));
        let finite = ac.x.iter().chain(ac.y.iter()).chain(ac.a.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("non-finite correspondence".into()));
        }
        items.push(SceneCorrespondence {
            ac,
            point,
            reference: c.reference,
        });
    }
    let scene = Scene {
        reference_poses,
        oriented_points: items.iter().map(|c| c.point).collect(),
        query_truth: file.query_truth.as_ref().map(PoseRecord::to_pose).transpose()?,
    };
    let corrs = CorrespondenceSet {
        items,
        inlier_mask: file.inlier_mask,
    };
    corrs.validate(&scene)?;
    Ok((scene, corrs))
}

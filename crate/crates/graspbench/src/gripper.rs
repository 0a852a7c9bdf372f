//! Parametric gripper models: open/closed-state voxelization into TSDF
//! pairs, configuration-scalar kinematics, Barrett-style presets, and the
//! gripper library file format.
//!
//! A gripper lives in its tool-center-point (TCP) frame: the TCP is the
//! midpoint between fingertips at the closed state, fingers point -z
//! (fingertips on the z = 0 plane, palm above). The configuration scalar
//! `c` maps linearly from 0 (fully closed) to 1 (fully open).

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::TsdfVolume;

/// Training-time configuration sampling range.
pub const TRAIN_CONFIG_RANGE: (f32, f32) = (0.4, 1.0);

/// Test-time configuration grid.
pub const TEST_CONFIGS: [f32; 5] = [0.5, 0.625, 0.75, 0.875, 1.0];

/// Gripper initial-opening scalar in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperConfig(pub f32);

impl GripperConfig {
    pub fn new(c: f32) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::Model(format!("config scalar {c} outside [0, 1]")));
        }
        Ok(GripperConfig(c))
    }

    pub fn value(self) -> f32 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperKind {
    /// Two fingers on a prismatic slide, closing along x.
    ParallelTwoFinger,
    /// Two fingers hinged at the palm, swinging in the x-z plane.
    AngularTwoFinger,
    /// Two palm-jointed fingers opposing one fixed finger, closing radially.
    ThreeFingerPalm,
}

/// Dataset split a library gripper belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperSplit {
    Train,
    Test,
    Toy,
}

fn default_scale() -> f32 {
    1.0
}

fn default_split() -> GripperSplit {
    GripperSplit::Train
}

/// Parametric gripper description. Lengths are meters at scale 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GripperModel {
    pub name: String,
    pub kind: GripperKind,
    /// Maximum opening width between finger inner faces at c = 1.
    pub max_opening: f32,
    /// Finger dimension along the closing direction.
    pub finger_thickness: f32,
    /// Finger dimension along z.
    pub finger_length: f32,
    /// Finger dimension perpendicular to closing and z.
    pub finger_depth: f32,
    /// Palm housing extents (x, y, z).
    pub palm_size: [f32; 3],
    /// Spread angle of the two flexible fingers (three-finger kind only).
    #[serde(default)]
    pub palm_joint: f32,
    /// Which fingers exist; supports "broken" variants. Index 0 is the fixed
    /// finger on three-finger models.
    #[serde(default)]
    pub fingers_present: Vec<bool>,
    /// Global geometric scale multiplier.
    #[serde(default = "default_scale")]
    pub scale: f32,
    #[serde(default = "default_split")]
    pub split: GripperSplit,
}

impl GripperModel {
    pub fn finger_count(&self) -> usize {
        match self.kind {
            GripperKind::ParallelTwoFinger | GripperKind::AngularTwoFinger => 2,
            GripperKind::ThreeFingerPalm => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_positive = self.max_opening > 0.0
            && self.finger_thickness > 0.0
            && self.finger_length > 0.0
            && self.finger_depth > 0.0
            && self.palm_size.iter().all(|&s| s > 0.0)
            && self.scale > 0.0;
        if !all_positive {
            return Err(Error::Model(format!(
                "gripper '{}' has a non-positive geometric field",
                self.name
            )));
        }
        let n = self.finger_count();
        if !self.fingers_present.is_empty() && self.fingers_present.len() != n {
            return Err(Error::Model(format!(
                "gripper '{}': fingers_present has {} entries, kind needs {}",
                self.name,
                self.fingers_present.len(),
                n
            )));
        }
        if self.present_flags().iter().filter(|&&p| p).count() < 2 {
            return Err(Error::Model(format!(
                "gripper '{}' has fewer than 2 fingers present",
                self.name
            )));
        }
        if self.kind == GripperKind::AngularTwoFinger {
            // The hinge must be able to reach the advertised opening.
            let reach = 2.0 * (self.finger_length + self.finger_thickness / 2.0);
            if self.max_opening > reach {
                return Err(Error::Model(format!(
                    "gripper '{}': max_opening {} exceeds hinge reach {}",
                    self.name, self.max_opening, reach
                )));
            }
        }
        if self.kind != GripperKind::ThreeFingerPalm && self.palm_joint != 0.0 {
            return Err(Error::Model(format!(
                "gripper '{}': palm_joint only applies to three-finger models",
                self.name
            )));
        }
        if !(0.0..=std::f32::consts::FRAC_PI_2 + 1e-6).contains(&self.palm_joint) {
            return Err(Error::Model(format!(
                "gripper '{}': palm_joint {} outside [0, pi/2]",
                self.name, self.palm_joint
            )));
        }
        Ok(())
    }

    fn present_flags(&self) -> Vec<bool> {
        if self.fingers_present.is_empty() {
            vec![true; self.finger_count()]
        } else {
            self.fingers_present.clone()
        }
    }

    /// Copy with a different global scale (training augmentation).
    pub fn with_scale(&self, scale: f32) -> GripperModel {
        GripperModel {
            scale,
            ..self.clone()
        }
    }

    /// Width between finger inner faces (meters) at configuration `c`.
    ///
    /// Parallel fingers map linearly; angular fingers map `c` linearly in
    /// joint angle and report the tip separation; three-finger palms close
    /// radially, also linear in `c`.
    pub fn opening_width(&self, config: GripperConfig) -> f32 {
        let c = config.value();
        match self.kind {
            GripperKind::ParallelTwoFinger | GripperKind::ThreeFingerPalm => {
                c * self.max_opening * self.scale
            }
            GripperKind::AngularTwoFinger => {
                let alpha = c * self.max_hinge_angle();
                self.scale * self.hinge_separation(alpha)
            }
        }
    }

    /// Tip inner-face separation for hinge angle `alpha`, at scale 1.
    fn hinge_separation(&self, alpha: f32) -> f32 {
        let l = self.finger_length;
        let t = self.finger_thickness;
        2.0 * (l * alpha.sin() + (t / 2.0) * (1.0 - alpha.cos()))
    }

    /// Hinge angle at which the tip separation reaches max_opening, found by
    /// bisection (the separation is monotone on [0, pi/2]).
    fn max_hinge_angle(&self) -> f32 {
        let target = self.max_opening;
        let (mut lo, mut hi) = (0.0f32, std::f32::consts::FRAC_PI_2);
        for _ in 0..48 {
            let mid = 0.5 * (lo + hi);
            if self.hinge_separation(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// The solid geometry at configuration `c`, in the TCP frame.
    pub fn solid(&self, config: GripperConfig) -> GripperSolid {
        let s = self.scale;
        let c = config.value();
        let t = self.finger_thickness * s;
        let l = self.finger_length * s;
        let d = self.finger_depth * s;
        let palm = [self.palm_size[0] * s, self.palm_size[1] * s, self.palm_size[2] * s];
        let present = self.present_flags();
        let mut parts = Vec::new();

        match self.kind {
            GripperKind::ParallelTwoFinger => {
                let w = c * self.max_opening * s;
                for (idx, sign) in [(0usize, 1.0f32), (1, -1.0)] {
                    if !present[idx] {
                        continue;
                    }
                    parts.push((
                        PartRole::Finger(idx),
                        OrientedBox::axis_aligned(
                            [sign * (w / 2.0 + t / 2.0), 0.0, l / 2.0],
                            [t / 2.0, d / 2.0, l / 2.0],
                        ),
                    ));
                }
            }
            GripperKind::AngularTwoFinger => {
                let alpha = c * self.max_hinge_angle();
                for (idx, sign) in [(0usize, 1.0f32), (1, -1.0)] {
                    if !present[idx] {
                        continue;
                    }
                    // Pivot at the top of the closed finger; the finger swings
                    // outward about the y axis.
                    let pivot = [sign * t / 2.0, 0.0, l];
                    let rot = rot_y(-sign * alpha);
                    let local_center = [0.0, 0.0, -l / 2.0];
                    let center = add(pivot, mat_mul_vec(rot, local_center));
                    parts.push((
                        PartRole::Finger(idx),
                        OrientedBox {
                            center,
                            half: [t / 2.0, d / 2.0, l / 2.0],
                            rot,
                        },
                    ));
                }
            }
            GripperKind::ThreeFingerPalm => {
                let radial = c * self.max_opening * s / 2.0;
                let lateral = 0.6 * d;
                let azimuths = [
                    std::f32::consts::FRAC_PI_2,
                    -std::f32::consts::FRAC_PI_2 + self.palm_joint,
                    -std::f32::consts::FRAC_PI_2 - self.palm_joint,
                ];
                let laterals = [0.0, lateral, -lateral];
                for idx in 0..3 {
                    if !present[idx] {
                        continue;
                    }
                    let a = azimuths[idx];
                    let (sin, cos) = a.sin_cos();
                    let u = [cos, sin]; // radial direction
                    let v = [-sin, cos]; // tangential direction
                    let r = radial + t / 2.0;
                    let b = laterals[idx];
                    let center = [r * u[0] + b * v[0], r * u[1] + b * v[1], l / 2.0];
                    // Box thickness along the radial axis, depth tangential.
                    let rot = rot_z(a);
                    parts.push((
                        PartRole::Finger(idx),
                        OrientedBox {
                            center,
                            half: [t / 2.0, d / 2.0, l / 2.0],
                            rot: mat_mul(rot, rot_z(-std::f32::consts::FRAC_PI_2)),
                        },
                    ));
                }
            }
        }

        parts.push((
            PartRole::Palm,
            OrientedBox::axis_aligned(
                [0.0, 0.0, l + palm[2] / 2.0],
                [palm[0] / 2.0, palm[1] / 2.0, palm[2] / 2.0],
            ),
        ));

        GripperSolid { parts }
    }

    /// Centers (TCP-frame xy) of the present fingers at configuration `c`,
    /// keyed by finger index.
    pub fn finger_centers(&self, config: GripperConfig) -> Vec<(usize, [f32; 2])> {
        self.solid(config)
            .parts
            .iter()
            .filter_map(|(role, part)| match role {
                PartRole::Finger(idx) => Some((*idx, [part.center[0], part.center[1]])),
                PartRole::Palm => None,
            })
            .collect()
    }

    /// Voxelize open (at `c`) and closed states onto the full-scale gripper
    /// grid.
    pub fn voxelize(&self, config: GripperConfig) -> Result<GripperObservation> {
        let probe = TsdfVolume::gripper();
        self.voxelize_grid(config, probe.dims(), probe.voxel_size())
    }

    /// Voxelize onto an explicit gripper grid (used by reduced-scale
    /// pipeline profiles).
    pub fn voxelize_grid(
        &self,
        config: GripperConfig,
        dims: [usize; 3],
        voxel_size: f32,
    ) -> Result<GripperObservation> {
        self.validate()?;
        let open = self.voxelize_state(config, dims, voxel_size)?;
        let closed = self.voxelize_state(GripperConfig(0.0), dims, voxel_size)?;
        Ok(GripperObservation { open, closed })
    }

    fn voxelize_state(
        &self,
        config: GripperConfig,
        dims: [usize; 3],
        voxel_size: f32,
    ) -> Result<TsdfVolume> {
        let mut vol = TsdfVolume::gripper_with(dims, voxel_size);
        let solid = self.solid(config);
        let origin = vol.origin();
        let extent = [
            origin[0] + dims[0] as f32 * voxel_size,
            origin[1] + dims[1] as f32 * voxel_size,
            origin[2] + dims[2] as f32 * voxel_size,
        ];
        let (lo, hi) = solid.aabb();
        for axis in 0..3 {
            if lo[axis] < origin[axis] || hi[axis] > extent[axis] {
                return Err(Error::Model(format!(
                    "gripper '{}' (scale {}) exceeds the {:?} voxel volume on axis {}",
                    self.name, self.scale, dims, axis
                )));
            }
        }
        let trunc = vol.truncation();
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = vol.voxel_center(i, j, k);
                    let sdf = solid.sdf(p);
                    vol.set_voxel(i, j, k, (sdf / trunc).clamp(-1.0, 1.0), 1.0);
                }
            }
        }
        Ok(vol)
    }
}

/// Open- and closed-state TSDF pair; the two channels of the gripper input.
#[derive(Debug, Clone)]
pub struct GripperObservation {
    pub open: TsdfVolume,
    pub closed: TsdfVolume,
}

/// Which solid part a box belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartRole {
    Palm,
    Finger(usize),
}

/// Box with an orientation, in the TCP frame. `rot` maps local to TCP
/// coordinates.
#[derive(Debug, Clone)]
pub struct OrientedBox {
    pub center: [f32; 3],
    pub half: [f32; 3],
    pub rot: [[f32; 3]; 3],
}

impl OrientedBox {
    pub fn axis_aligned(center: [f32; 3], half: [f32; 3]) -> Self {
        OrientedBox {
            center,
            half,
            rot: IDENTITY,
        }
    }

    /// Signed distance from `p` (TCP frame) to the box surface.
    pub fn sdf(&self, p: [f32; 3]) -> f32 {
        let d = sub(p, self.center);
        // rot^T * d: into the local frame.
        let q = [
            self.rot[0][0] * d[0] + self.rot[1][0] * d[1] + self.rot[2][0] * d[2],
            self.rot[0][1] * d[0] + self.rot[1][1] * d[1] + self.rot[2][1] * d[2],
            self.rot[0][2] * d[0] + self.rot[1][2] * d[1] + self.rot[2][2] * d[2],
        ];
        let ex = [
            q[0].abs() - self.half[0],
            q[1].abs() - self.half[1],
            q[2].abs() - self.half[2],
        ];
        let outside = [ex[0].max(0.0), ex[1].max(0.0), ex[2].max(0.0)];
        let out_d = (outside[0] * outside[0] + outside[1] * outside[1] + outside[2] * outside[2])
            .sqrt();
        let in_d = ex[0].max(ex[1]).max(ex[2]).min(0.0);
        out_d + in_d
    }

    pub fn contains(&self, p: [f32; 3]) -> bool {
        self.sdf(p) <= 0.0
    }

    pub fn corners(&self) -> [[f32; 3]; 8] {
        let mut out = [[0.0f32; 3]; 8];
        for (n, corner) in out.iter_mut().enumerate() {
            let local = [
                if n & 1 == 0 { -self.half[0] } else { self.half[0] },
                if n & 2 == 0 { -self.half[1] } else { self.half[1] },
                if n & 4 == 0 { -self.half[2] } else { self.half[2] },
            ];
            *corner = add(self.center, mat_mul_vec(self.rot, local));
        }
        out
    }
}

/// Collection of solid parts making up a gripper at one configuration.
#[derive(Debug, Clone)]
pub struct GripperSolid {
    pub parts: Vec<(PartRole, OrientedBox)>,
}

impl GripperSolid {
    /// Union signed distance (exact outside, conservative inside).
    pub fn sdf(&self, p: [f32; 3]) -> f32 {
        self.parts
            .iter()
            .map(|(_, b)| b.sdf(p))
            .fold(f32::INFINITY, f32::min)
    }

    pub fn aabb(&self) -> ([f32; 3], [f32; 3]) {
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for (_, part) in &self.parts {
            for corner in part.corners() {
                for axis in 0..3 {
                    lo[axis] = lo[axis].min(corner[axis]);
                    hi[axis] = hi[axis].max(corner[axis]);
                }
            }
        }
        (lo, hi)
    }

    pub fn finger_parts(&self, idx: usize) -> Vec<&OrientedBox> {
        self.parts
            .iter()
            .filter_map(|(role, b)| (*role == PartRole::Finger(idx)).then_some(b))
            .collect()
    }
}

/// Four i.i.d. uniform configurations in [0.4, 1.0], deterministic per seed.
pub fn sample_train_configs(seed: u64) -> [GripperConfig; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = TRAIN_CONFIG_RANGE;
    std::array::from_fn(|_| GripperConfig(rng.random_range(lo..hi)))
}

/// The three palm-joint presets for a three-finger hand:
/// flexible fingers parallel, spread by 0.2 pi, and the "broken" two-finger
/// variant with the fixed finger removed.
pub fn barrett_presets(base: &GripperModel) -> Result<[GripperModel; 3]> {
    if base.kind != GripperKind::ThreeFingerPalm {
        return Err(Error::Model(format!(
            "'{}' is not a three-finger palm model",
            base.name
        )));
    }
    let preset = |suffix: &str, joint: f32, present: Vec<bool>| GripperModel {
        name: format!("{}_{suffix}", base.name),
        palm_joint: joint,
        fingers_present: present,
        ..base.clone()
    };
    Ok([
        preset("p1", 0.0, vec![true; 3]),
        preset("p2", 0.1 * std::f32::consts::PI, vec![true; 3]),
        preset("p3", 0.5 * std::f32::consts::PI, vec![false, true, true]),
    ])
}

/// Named set of gripper models, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GripperLibrary {
    pub grippers: Vec<GripperModel>,
}

impl GripperLibrary {
    pub fn load_path(path: &Path) -> Result<GripperLibrary> {
        let text = std::fs::read_to_string(path)?;
        let lib: GripperLibrary = serde_json::from_str(&text)?;
        for model in &lib.grippers {
            model.validate()?;
        }
        Ok(lib)
    }

    pub fn save_path(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&GripperModel> {
        self.grippers
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| Error::Config(format!("unknown gripper '{name}'")))
    }

    pub fn names(&self) -> Vec<&str> {
        self.grippers.iter().map(|g| g.name.as_str()).collect()
    }

    pub fn split(&self, split: GripperSplit) -> Vec<&GripperModel> {
        self.grippers.iter().filter(|g| g.split == split).collect()
    }

    /// Built-in models approximating the published geometry of common
    /// research grippers, sized to fit the gripper voxel volume at training
    /// scales. Includes the two-width toy pair used by the scripted domain.
    pub fn builtin() -> GripperLibrary {
        let parallel = |name: &str,
                        split: GripperSplit,
                        opening: f32,
                        t: f32,
                        l: f32,
                        d: f32,
                        palm: [f32; 3]| GripperModel {
            name: name.into(),
            kind: GripperKind::ParallelTwoFinger,
            max_opening: opening,
            finger_thickness: t,
            finger_length: l,
            finger_depth: d,
            palm_size: palm,
            palm_joint: 0.0,
            fingers_present: vec![true, true],
            scale: 1.0,
            split,
        };
        let angular = |name: &str,
                       split: GripperSplit,
                       opening: f32,
                       t: f32,
                       l: f32,
                       d: f32,
                       palm: [f32; 3]| GripperModel {
            kind: GripperKind::AngularTwoFinger,
            ..parallel(name, split, opening, t, l, d, palm)
        };
        let three = |name: &str,
                     split: GripperSplit,
                     opening: f32,
                     t: f32,
                     l: f32,
                     d: f32,
                     palm: [f32; 3],
                     joint: f32| GripperModel {
            kind: GripperKind::ThreeFingerPalm,
            palm_joint: joint,
            fingers_present: vec![true, true, true],
            ..parallel(name, split, opening, t, l, d, palm)
        };

        use GripperSplit::{Test, Toy, Train};
        let spread = 0.1 * std::f32::consts::PI;
        let mut grippers = vec![
            parallel("wsg32", Train, 0.068, 0.012, 0.058, 0.020, [0.100, 0.040, 0.020]),
            parallel("sawyer", Train, 0.080, 0.014, 0.060, 0.022, [0.120, 0.045, 0.020]),
            parallel("franka", Train, 0.080, 0.018, 0.050, 0.022, [0.130, 0.060, 0.022]),
            angular("robotiq_2f140", Train, 0.140, 0.012, 0.068, 0.020, [0.090, 0.050, 0.010]),
            angular("ezgripper", Train, 0.135, 0.010, 0.068, 0.018, [0.080, 0.050, 0.010]),
            three("kinova_kg3", Train, 0.130, 0.012, 0.060, 0.020, [0.100, 0.100, 0.016], spread),
            three("robotiq_3f", Train, 0.140, 0.014, 0.062, 0.022, [0.110, 0.110, 0.014], spread),
            parallel("wsg50", Test, 0.110, 0.014, 0.062, 0.022, [0.150, 0.045, 0.016]),
            angular("rg2", Test, 0.110, 0.012, 0.062, 0.020, [0.090, 0.050, 0.014]),
            parallel("robotiq_2f85", Test, 0.085, 0.015, 0.055, 0.022, [0.130, 0.055, 0.018]),
            three("barrett", Test, 0.150, 0.014, 0.065, 0.024, [0.110, 0.110, 0.012], spread),
            parallel("toy_narrow", Toy, 0.040, 0.008, 0.030, 0.014, [0.070, 0.030, 0.008]),
            parallel("toy_wide", Toy, 0.100, 0.008, 0.030, 0.014, [0.130, 0.030, 0.008]),
        ];
        // Barrett with the fixed-palm finger removed: a two-finger hand.
        let barrett = grippers
            .iter()
            .find(|g| g.name == "barrett")
            .expect("barrett in builtin list")
            .clone();
        let broken = GripperModel {
            name: "barrett_b".into(),
            palm_joint: 0.5 * std::f32::consts::PI,
            fingers_present: vec![false, true, true],
            split: Test,
            ..barrett
        };
        grippers.push(broken);
        GripperLibrary { grippers }
    }
}

const IDENTITY: [[f32; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn rot_y(beta: f32) -> [[f32; 3]; 3] {
    let (s, c) = beta.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(gamma: f32) -> [[f32; 3]; 3] {
    let (s, c) = gamma.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn mat_mul(a: [[f32; 3]; 3], b: [[f32; 3]; 3]) -> [[f32; 3]; 3] {
    let mut out = [[0.0f32; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            for k in 0..3 {
                out[r][c] += a[r][k] * b[k][c];
            }
        }
    }
    out
}

#[inline]
fn mat_mul_vec(m: [[f32; 3]; 3], v: [f32; 3]) -> [f32; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

#[inline]
fn add(a: [f32; 3], b: [f32; 3]) -> [f32; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
fn sub(a: [f32; 3], b: [f32; 3]) -> [f32; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

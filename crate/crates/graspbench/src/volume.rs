//! Voxel-grid data structures: truncated signed distance volumes, depth-image
//! fusion, rigid resampling, and occupancy extraction.
//!
//! Values are truncation-normalized to `[-1, 1]` (negative inside surfaces,
//! positive outside). Unobserved voxels (weight 0) read `+1`, a free-space
//! prior: occluded regions must not block grasp proposals behind visible
//! surfaces. Grids are stored x-fastest (`idx = i + nx * (j + ny * k)`),
//! matching the on-disk layout.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ratio of truncation distance to voxel size.
pub const TRUNCATION_VOXELS: f32 = 5.0;

/// Scene grid dimensions at full scale.
pub const SCENE_DIMS: [usize; 3] = [192, 192, 64];
/// Scene voxel size in meters at full scale.
pub const SCENE_VOXEL: f32 = 0.002;
/// Gripper grid dimensions at full scale.
pub const GRIPPER_DIMS: [usize; 3] = [64, 64, 32];
/// Gripper voxel size in meters at full scale.
pub const GRIPPER_VOXEL: f32 = 0.004;

const VOLUME_MAGIC: &[u8; 7] = b"ADGVOL1";

/// Truncated signed distance grid with fusion weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TsdfVolume {
    dims: [usize; 3],
    voxel_size: f32,
    origin: [f32; 3],
    truncation: f32,
    values: Vec<f32>,
    weights: Vec<f32>,
}

impl TsdfVolume {
    /// Fresh volume: all values +1 (free prior), all weights 0.
    pub fn new(dims: [usize; 3], voxel_size: f32, origin: [f32; 3]) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        TsdfVolume {
            dims,
            voxel_size,
            origin,
            truncation: TRUNCATION_VOXELS * voxel_size,
            values: vec![1.0; n],
            weights: vec![0.0; n],
        }
    }

    /// Scene-sized volume (192 x 192 x 64 at 2 mm) anchored at the world origin.
    pub fn scene() -> Self {
        TsdfVolume::new(SCENE_DIMS, SCENE_VOXEL, [0.0; 3])
    }

    /// Gripper-sized volume (64 x 64 x 32 at 4 mm). The grid is centered on
    /// the gripper's tool-center point in x/y; in z the TCP sits at quarter
    /// height so fingers and palm (which extend upward from the fingertip
    /// plane) fit at training scales.
    pub fn gripper() -> Self {
        TsdfVolume::gripper_with(GRIPPER_DIMS, GRIPPER_VOXEL)
    }

    /// Gripper volume with explicit grid parameters, same TCP placement rule.
    pub fn gripper_with(dims: [usize; 3], voxel_size: f32) -> Self {
        let origin = [
            -(dims[0] as f32) * voxel_size / 2.0,
            -(dims[1] as f32) * voxel_size / 2.0,
            -(dims[2] as f32) * voxel_size / 4.0,
        ];
        TsdfVolume::new(dims, voxel_size, origin)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> f32 {
        self.voxel_size
    }

    pub fn origin(&self) -> [f32; 3] {
        self.origin
    }

    pub fn truncation(&self) -> f32 {
        self.truncation
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn value_at(&self, i: usize, j: usize, k: usize) -> f32 {
        self.values[self.index(i, j, k)]
    }

    #[inline]
    pub fn weight_at(&self, i: usize, j: usize, k: usize) -> f32 {
        self.weights[self.index(i, j, k)]
    }

    /// World position of the voxel center.
    #[inline]
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> [f32; 3] {
        [
            self.origin[0] + (i as f32 + 0.5) * self.voxel_size,
            self.origin[1] + (j as f32 + 0.5) * self.voxel_size,
            self.origin[2] + (k as f32 + 0.5) * self.voxel_size,
        ]
    }

    /// Directly set one voxel. Used by analytic voxelizers; values are clamped
    /// to [-1, 1] to preserve the grid invariant.
    pub fn set_voxel(&mut self, i: usize, j: usize, k: usize, value: f32, weight: f32) {
        let idx = self.index(i, j, k);
        self.values[idx] = value.clamp(-1.0, 1.0);
        self.weights[idx] = weight.max(0.0);
    }

    /// Integrate one depth image by weighted running average.
    ///
    /// Per voxel, the signed distance along the camera ray is clamped to the
    /// truncation band and normalized to [-1, 1]. Voxels behind the surface
    /// beyond the truncation band are untouched; pixels with non-finite depth
    /// contribute nothing.
    pub fn fuse_depth(&mut self, img: &DepthImage) -> Result<()> {
        img.camera.validate()?;
        let [nx, ny, nz] = self.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let p = self.voxel_center(i, j, k);
                    let Some((u, v, voxel_depth)) = img.camera.project(p) else {
                        continue;
                    };
                    if voxel_depth <= 0.0 {
                        continue;
                    }
                    let Some(measured) = img.depth_at(u, v) else {
                        continue;
                    };
                    let sdf = measured - voxel_depth;
                    if sdf < -self.truncation {
                        continue; // occluded beyond the band
                    }
                    let tsdf = (sdf / self.truncation).clamp(-1.0, 1.0);
                    let idx = self.index(i, j, k);
                    let w = self.weights[idx];
                    self.values[idx] = (self.values[idx] * w + tsdf) / (w + 1.0);
                    self.weights[idx] = w + 1.0;
                }
            }
        }
        Ok(())
    }

    /// Rigid in-plane resampling: rotate by `rotation_z` about the grid's
    /// xy-center, then shift by `shift` meters. Each output voxel reads the
    /// input at the inverse-transformed location via trilinear interpolation;
    /// out-of-bounds reads return `fill`. Output weights are resampled the
    /// same way (fill weight 0).
    pub fn resample_rigid(&self, rotation_z: f32, shift: [f32; 2], fill: f32) -> TsdfVolume {
        let [nx, ny, nz] = self.dims;
        let mut out = TsdfVolume::new(self.dims, self.voxel_size, self.origin);
        out.truncation = self.truncation;

        // Grid xy-center in voxel coordinates (voxel centers at i + 0.5).
        let cx = nx as f32 / 2.0;
        let cy = ny as f32 / 2.0;
        let (sin, cos) = rotation_trig(rotation_z);
        let sx = snap_integer(shift[0] / self.voxel_size);
        let sy = snap_integer(shift[1] / self.voxel_size);

        for k in 0..nz {
            for j in 0..ny {
                let fy = j as f32 + 0.5 - cy - sy;
                for i in 0..nx {
                    let fx = i as f32 + 0.5 - cx - sx;
                    // Inverse rotation about the center.
                    let gx = cos * fx + sin * fy + cx - 0.5;
                    let gy = -sin * fx + cos * fy + cy - 0.5;
                    let idx = out.index(i, j, k);
                    let (v, w) = self.sample_trilinear_xy(gx, gy, k, fill);
                    out.values[idx] = v;
                    out.weights[idx] = w;
                }
            }
        }
        out
    }

    /// Bilinear sample in the xy-plane at layer k (rotation is about z, so no
    /// interpolation across z is needed).
    fn sample_trilinear_xy(&self, gx: f32, gy: f32, k: usize, fill: f32) -> (f32, f32) {
        let [nx, ny, _] = self.dims;
        let x0 = gx.floor();
        let y0 = gy.floor();
        let tx = gx - x0;
        let ty = gy - y0;
        let x0 = x0 as i64;
        let y0 = y0 as i64;

        let mut value = 0.0;
        let mut weight = 0.0;
        for (dx, wx) in [(0i64, 1.0 - tx), (1, tx)] {
            for (dy, wy) in [(0i64, 1.0 - ty), (1, ty)] {
                let w = wx * wy;
                if w == 0.0 {
                    continue;
                }
                let x = x0 + dx;
                let y = y0 + dy;
                if x < 0 || y < 0 || x >= nx as i64 || y >= ny as i64 {
                    value += w * fill;
                } else {
                    let idx = self.index(x as usize, y as usize, k);
                    value += w * self.values[idx];
                    weight += w * self.weights[idx];
                }
            }
        }
        (value.clamp(-1.0, 1.0), weight)
    }

    /// Binary occupancy: voxel occupied iff value < threshold and weight > 0.
    pub fn occupancy(&self, threshold: f32) -> MaskGrid {
        let mut mask = MaskGrid::zeros(self.dims);
        for idx in 0..self.values.len() {
            if self.values[idx] < threshold && self.weights[idx] > 0.0 {
                mask.data[idx] = 1;
            }
        }
        mask
    }

    /// World z of the top face of the highest occupied voxel in column (i, j),
    /// or the workspace floor (origin z) when the column is empty.
    pub fn column_height(&self, i: usize, j: usize) -> Result<f32> {
        let [nx, ny, nz] = self.dims;
        if i >= nx || j >= ny {
            return Err(Error::OutOfBounds(format!(
                "column ({i}, {j}) outside {nx} x {ny} grid"
            )));
        }
        for k in (0..nz).rev() {
            let idx = self.index(i, j, k);
            if self.values[idx] < 0.0 && self.weights[idx] > 0.0 {
                return Ok(self.origin[2] + (k as f32 + 1.0) * self.voxel_size);
            }
        }
        Ok(self.origin[2])
    }

    /// Write the volume checkpoint: "ADGVOL1" header, dims, voxel size,
    /// origin, truncation, then values and weights as little-endian f32 in
    /// x-fastest order.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(VOLUME_MAGIC)?;
        for d in self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&self.voxel_size.to_le_bytes())?;
        for o in self.origin {
            w.write_all(&o.to_le_bytes())?;
        }
        w.write_all(&self.truncation.to_le_bytes())?;
        write_f32s(w, &self.values)?;
        write_f32s(w, &self.weights)?;
        Ok(())
    }

    pub fn save_path(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut f)
    }

    pub fn load<R: Read>(r: &mut R) -> Result<TsdfVolume> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint("volume file truncated before header".into()))?;
        if &magic != VOLUME_MAGIC {
            return Err(Error::Checkpoint("bad volume magic".into()));
        }
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            *d = read_u32(r)? as usize;
        }
        let voxel_size = read_f32(r)?;
        let mut origin = [0f32; 3];
        for o in origin.iter_mut() {
            *o = read_f32(r)?;
        }
        let truncation = read_f32(r)?;
        let n = dims[0] * dims[1] * dims[2];
        if n == 0 || n > (1 << 28) {
            return Err(Error::Checkpoint(format!("implausible dims {dims:?}")));
        }
        let values = read_f32s(r, n)?;
        let weights = read_f32s(r, n)?;
        Ok(TsdfVolume {
            dims,
            voxel_size,
            origin,
            truncation,
            values,
            weights,
        })
    }

    pub fn load_path(path: &Path) -> Result<TsdfVolume> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        TsdfVolume::load(&mut f)
    }
}

fn write_f32s<W: Write>(w: &mut W, xs: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 4);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Checkpoint("volume file truncated".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    Ok(f32::from_bits(read_u32(r)?))
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint("volume file truncated in payload".into()))?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Binary mask over a voxel grid (same layout as [`TsdfVolume`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskGrid {
    pub dims: [usize; 3],
    pub data: Vec<u8>,
}

impl MaskGrid {
    pub fn zeros(dims: [usize; 3]) -> Self {
        MaskGrid {
            dims,
            data: vec![0; dims[0] * dims[1] * dims[2]],
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[self.index(i, j, k)] != 0
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: bool) {
        let idx = self.index(i, j, k);
        self.data[idx] = v as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b != 0).count()
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&b| b == 0)
    }

    /// Nearest-neighbor rigid resample; masks are categorical so no
    /// interpolation. Out-of-bounds reads are 0.
    pub fn resample_rigid(&self, rotation_z: f32, shift: [f32; 2], voxel_size: f32) -> MaskGrid {
        let [nx, ny, nz] = self.dims;
        let mut out = MaskGrid::zeros(self.dims);
        let cx = nx as f32 / 2.0;
        let cy = ny as f32 / 2.0;
        let (sin, cos) = rotation_trig(rotation_z);
        let sx = snap_integer(shift[0] / voxel_size);
        let sy = snap_integer(shift[1] / voxel_size);
        for k in 0..nz {
            for j in 0..ny {
                let fy = j as f32 + 0.5 - cy - sy;
                for i in 0..nx {
                    let fx = i as f32 + 0.5 - cx - sx;
                    let gx = cos * fx + sin * fy + cx - 0.5;
                    let gy = -sin * fx + cos * fy + cy - 0.5;
                    let x = gx.round() as i64;
                    let y = gy.round() as i64;
                    if x >= 0 && y >= 0 && (x as usize) < nx && (y as usize) < ny {
                        let v = self.data[self.index(x as usize, y as usize, k)];
                        if v != 0 {
                            let dst = out.index(i, j, k);
                            out.data[dst] = 1;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Camera intrinsics: orthographic (top-down heightmap style) or pinhole.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Intrinsics {
    /// Orthographic projection: `pixel_size` meters per pixel, principal
    /// point at the image center.
    Orthographic { pixel_size: f32 },
    /// Pinhole projection with focal lengths and principal point in pixels.
    Pinhole { fx: f32, fy: f32, cx: f32, cy: f32 },
}

/// Camera pose, camera-to-world. The camera looks along its local +z axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraPose {
    /// Row-major 3x3 rotation (camera axes expressed in world frame).
    pub rotation: [[f32; 3]; 3],
    /// Camera position in world frame, meters.
    pub translation: [f32; 3],
}

impl CameraPose {
    /// Top-down pose at `height`, looking along -z world, with camera x/y
    /// aligned to world x/-y (right-handed, depth increases downward).
    pub fn top_down(center_x: f32, center_y: f32, height: f32) -> CameraPose {
        CameraPose {
            rotation: [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]],
            translation: [center_x, center_y, height],
        }
    }

    /// Pose at `eye` with the optical axis pointing at `target`, world +z as
    /// the up reference.
    pub fn look_at(eye: [f32; 3], target: [f32; 3]) -> CameraPose {
        let fwd = normalize(sub(target, eye));
        let mut up = [0.0, 0.0, 1.0];
        if fwd[2].abs() > 0.999 {
            up = [0.0, 1.0, 0.0];
        }
        let right = normalize(cross(fwd, up));
        let down = cross(fwd, right);
        // Columns are the camera basis vectors in world coordinates.
        CameraPose {
            rotation: [
                [right[0], down[0], fwd[0]],
                [right[1], down[1], fwd[1]],
                [right[2], down[2], fwd[2]],
            ],
            translation: eye,
        }
    }

    /// World point -> camera frame.
    #[inline]
    pub fn world_to_camera(&self, p: [f32; 3]) -> [f32; 3] {
        let d = sub(p, self.translation);
        // R^T * d (rotation columns are camera axes).
        [
            self.rotation[0][0] * d[0] + self.rotation[1][0] * d[1] + self.rotation[2][0] * d[2],
            self.rotation[0][1] * d[0] + self.rotation[1][1] * d[1] + self.rotation[2][1] * d[2],
            self.rotation[0][2] * d[0] + self.rotation[1][2] * d[1] + self.rotation[2][2] * d[2],
        ]
    }

    /// Camera-frame point -> world.
    #[inline]
    pub fn camera_to_world(&self, p: [f32; 3]) -> [f32; 3] {
        [
            self.rotation[0][0] * p[0] + self.rotation[0][1] * p[1] + self.rotation[0][2] * p[2]
                + self.translation[0],
            self.rotation[1][0] * p[0] + self.rotation[1][1] * p[1] + self.rotation[1][2] * p[2]
                + self.translation[1],
            self.rotation[2][0] * p[0] + self.rotation[2][1] * p[1] + self.rotation[2][2] * p[2]
                + self.translation[2],
        ]
    }

    fn is_orthonormal(&self) -> bool {
        let r = &self.rotation;
        let cols = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        for a in 0..3 {
            for b in 0..3 {
                let dot = cols[a][0] * cols[b][0] + cols[a][1] * cols[b][1] + cols[a][2] * cols[b][2];
                let expect = if a == b { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-4 {
                    return false;
                }
            }
        }
        true
    }
}

/// Full camera: intrinsics + extrinsic pose.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub pose: CameraPose,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !self.pose.is_orthonormal() {
            return Err(Error::Config("camera extrinsic rotation is not orthonormal".into()));
        }
        match self.intrinsics {
            Intrinsics::Orthographic { pixel_size } if pixel_size <= 0.0 => {
                Err(Error::Config("orthographic pixel size must be positive".into()))
            }
            Intrinsics::Pinhole { fx, fy, .. } if fx <= 0.0 || fy <= 0.0 => {
                Err(Error::Config("pinhole focal length must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Project a world point to (pixel u, pixel v, depth along the ray).
    /// Returns None when the point is outside the image or behind the camera.
    #[inline]
    pub fn project(&self, p: [f32; 3]) -> Option<(usize, usize, f32)> {
        let q = self.pose.world_to_camera(p);
        let (u, v) = match self.intrinsics {
            Intrinsics::Orthographic { pixel_size } => (
                q[0] / pixel_size + self.width as f32 / 2.0 - 0.5,
                q[1] / pixel_size + self.height as f32 / 2.0 - 0.5,
            ),
            Intrinsics::Pinhole { fx, fy, cx, cy } => {
                if q[2] <= 1e-6 {
                    return None;
                }
                (fx * q[0] / q[2] + cx, fy * q[1] / q[2] + cy)
            }
        };
        let ui = u.round();
        let vi = v.round();
        if ui < 0.0 || vi < 0.0 || ui >= self.width as f32 || vi >= self.height as f32 {
            return None;
        }
        Some((ui as usize, vi as usize, q[2]))
    }

    /// Ray through pixel (u, v): returns (origin, direction) in world frame.
    pub fn pixel_ray(&self, u: usize, v: usize) -> ([f32; 3], [f32; 3]) {
        match self.intrinsics {
            Intrinsics::Orthographic { pixel_size } => {
                let x = (u as f32 - self.width as f32 / 2.0 + 0.5) * pixel_size;
                let y = (v as f32 - self.height as f32 / 2.0 + 0.5) * pixel_size;
                let origin = self.pose.camera_to_world([x, y, 0.0]);
                let dir = sub(self.pose.camera_to_world([x, y, 1.0]), origin);
                (origin, normalize(dir))
            }
            Intrinsics::Pinhole { fx, fy, cx, cy } => {
                let x = (u as f32 - cx) / fx;
                let y = (v as f32 - cy) / fy;
                let origin = self.pose.translation;
                let dir = sub(self.pose.camera_to_world([x, y, 1.0]), origin);
                (origin, normalize(dir))
            }
        }
    }
}

/// Depth image with its capturing camera. Non-finite depths mean no return.
#[derive(Debug, Clone)]
pub struct DepthImage {
    pub camera: Camera,
    pub depths: Vec<f32>,
}

impl DepthImage {
    pub fn new(camera: Camera) -> Self {
        let n = camera.width * camera.height;
        DepthImage {
            camera,
            depths: vec![f32::INFINITY; n],
        }
    }

    #[inline]
    pub fn depth_at(&self, u: usize, v: usize) -> Option<f32> {
        let d = self.depths[v * self.camera.width + u];
        d.is_finite().then_some(d)
    }

    pub fn set_depth(&mut self, u: usize, v: usize, d: f32) {
        let w = self.camera.width;
        self.depths[v * w + u] = d;
    }
}

/// Sine/cosine with exact values at quarter-turn multiples, so that
/// resampling at k * pi/2 degenerates to a pure index permutation.
fn rotation_trig(theta: f32) -> (f32, f32) {
    let q = theta / std::f32::consts::FRAC_PI_2;
    let qi = q.round();
    if (q - qi).abs() < 1e-5 {
        match (qi as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        theta.sin_cos()
    }
}

/// Snap a voxel-space shift to an integer when it is one up to rounding, so
/// integer-voxel shifts resample exactly.
fn snap_integer(x: f32) -> f32 {
    let r = x.round();
    if (x - r).abs() < 1e-4 {
        r
    } else {
        x
    }
}

#[inline]
fn sub(a: [f32; 3], b: [f32; 3]) -> [f32; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn cross(a: [f32; 3], b: [f32; 3]) -> [f32; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn normalize(a: [f32; 3]) -> [f32; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn top_down_ortho(dims: [usize; 3], voxel: f32, height: f32) -> Camera {
        Camera {
            intrinsics: Intrinsics::Orthographic { pixel_size: voxel },
            pose: CameraPose::top_down(
                dims[0] as f32 * voxel / 2.0,
                dims[1] as f32 * voxel / 2.0,
                height,
            ),
            width: dims[0],
            height: dims[1],
        }
    }

    /// Orthographic image of an infinite horizontal plane at `plane_z`.
    fn plane_image(cam: Camera, plane_z: f32) -> DepthImage {
        let mut img = DepthImage::new(cam);
        let d = img.camera.pose.translation[2] - plane_z;
        for px in img.depths.iter_mut() {
            *px = d;
        }
        img
    }

    #[test]
    fn fresh_volume_is_free_prior() {
        let vol = TsdfVolume::new([8, 8, 8], 0.002, [0.0; 3]);
        assert!(vol.values().iter().all(|&v| v == 1.0));
        assert!(vol.weights().iter().all(|&w| w == 0.0));
        assert!(vol.occupancy(0.0).is_all_zero());
    }

    #[test]
    fn all_sentinel_depths_leave_volume_unchanged() {
        let mut vol = TsdfVolume::new([16, 16, 16], 0.002, [0.0; 3]);
        let img = DepthImage::new(top_down_ortho([16, 16, 16], 0.002, 0.3));
        let before = vol.clone();
        vol.fuse_depth(&img).unwrap();
        assert_eq!(vol, before);
    }

    #[test]
    fn plane_fusion_zero_crossing_near_plane_height() {
        let dims = [32, 32, 64];
        let voxel = 0.002;
        let mut vol = TsdfVolume::new(dims, voxel, [0.0; 3]);
        let img = plane_image(top_down_ortho(dims, voxel, 0.3), 0.04);
        vol.fuse_depth(&img).unwrap();

        // Sign must flip between the voxel layers straddling z = 0.04 and the
        // interpolated crossing must land within one voxel of the plane.
        for (i, j) in [(0, 0), (10, 20), (31, 31)] {
            let mut crossing = None;
            for k in 0..dims[2] - 1 {
                let a = vol.value_at(i, j, k);
                let b = vol.value_at(i, j, k + 1);
                if a < 0.0 && b >= 0.0 {
                    let za = vol.voxel_center(i, j, k)[2];
                    let t = -a / (b - a);
                    crossing = Some(za + t * voxel);
                }
            }
            let z = crossing.expect("no zero crossing found");
            assert!(
                (z - 0.04).abs() < voxel,
                "crossing at {z}, expected near 0.04"
            );
        }
        for v in vol.values() {
            assert!((-1.0..=1.0).contains(v));
        }
    }

    #[test]
    fn fusing_same_image_twice_doubles_weights_only() {
        let dims = [16, 16, 32];
        let mut once = TsdfVolume::new(dims, 0.002, [0.0; 3]);
        let img = plane_image(top_down_ortho(dims, 0.002, 0.3), 0.02);
        once.fuse_depth(&img).unwrap();
        let mut twice = TsdfVolume::new(dims, 0.002, [0.0; 3]);
        twice.fuse_depth(&img).unwrap();
        twice.fuse_depth(&img).unwrap();
        for idx in 0..once.values.len() {
            assert!((once.values[idx] - twice.values[idx]).abs() < 1e-6);
            assert_eq!(once.weights[idx] * 2.0, twice.weights[idx]);
        }
    }

    #[test]
    fn fusion_weights_never_decrease() {
        let dims = [16, 16, 16];
        let mut vol = TsdfVolume::new(dims, 0.002, [0.0; 3]);
        let img = plane_image(top_down_ortho(dims, 0.002, 0.3), 0.01);
        let w0: Vec<f32> = vol.weights().to_vec();
        vol.fuse_depth(&img).unwrap();
        for (a, b) in w0.iter().zip(vol.weights()) {
            assert!(b >= a);
        }
    }

    #[test]
    fn resample_identity_is_bitwise_equal() {
        let mut vol = TsdfVolume::new([16, 16, 8], 0.002, [0.0; 3]);
        let img = plane_image(top_down_ortho([16, 16, 8], 0.002, 0.3), 0.006);
        vol.fuse_depth(&img).unwrap();
        let out = vol.resample_rigid(0.0, [0.0, 0.0], 1.0);
        assert_eq!(out.values(), vol.values());
        assert_eq!(out.weights(), vol.weights());
    }

    #[test]
    fn resample_quarter_turn_is_exact_axis_swap() {
        let dims = [12, 12, 4];
        let mut vol = TsdfVolume::new(dims, 0.002, [0.0; 3]);
        // Asymmetric pattern.
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let v = ((i * 7 + j * 3 + k * 11) % 19) as f32 / 19.0 * 2.0 - 1.0;
                    vol.set_voxel(i, j, k, v, 1.0);
                }
            }
        }
        let rot = vol.resample_rigid(std::f32::consts::FRAC_PI_2, [0.0, 0.0], 1.0);
        // CCW quarter turn about the center maps input (i, j) -> output (-j, i),
        // i.e. output (i, j) reads input (j, n-1-i). Exact, no interpolation.
        let n = dims[0];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let expect = vol.value_at(j, n - 1 - i, k);
                    let got = rot.value_at(i, j, k);
                    assert_eq!(expect, got, "mismatch at ({i},{j},{k})");
                }
            }
        }
    }

    #[test]
    fn integer_shift_is_exact() {
        let dims = [10, 10, 2];
        let mut vol = TsdfVolume::new(dims, 0.002, [0.0; 3]);
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let v = ((i * 13 + j * 5) % 17) as f32 / 17.0 - 0.5;
                vol.set_voxel(i, j, 0, v, 1.0);
            }
        }
        let shifted = vol.resample_rigid(0.0, [3.0 * 0.002, 0.0], 1.0);
        for j in 0..dims[1] {
            for i in 3..dims[0] {
                assert_eq!(shifted.value_at(i, j, 0), vol.value_at(i - 3, j, 0));
            }
        }
        // Vacated band is filled.
        assert_eq!(shifted.value_at(0, 0, 0), 1.0);
    }

    #[test]
    fn resample_round_trip_error_is_bounded() {
        let dims = [24, 24, 8];
        let mut vol = TsdfVolume::new(dims, 0.002, [0.0; 3]);
        // Smooth volume: product of sinusoids.
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let v = (i as f32 * 0.3).sin() * (j as f32 * 0.25).cos() * 0.8;
                    vol.set_voxel(i, j, k, v, 1.0);
                }
            }
        }
        let theta = std::f32::consts::PI / 7.0;
        let back = vol
            .resample_rigid(theta, [0.0, 0.0], 1.0)
            .resample_rigid(-theta, [0.0, 0.0], 1.0);
        // Interior deviation bound; the border is polluted by fill.
        let mut max_dev = 0.0f32;
        for k in 0..dims[2] {
            for j in 6..dims[1] - 6 {
                for i in 6..dims[0] - 6 {
                    let dev = (back.value_at(i, j, k) - vol.value_at(i, j, k)).abs();
                    max_dev = max_dev.max(dev);
                }
            }
        }
        assert!(max_dev < 0.1, "round trip deviation {max_dev}");
    }

    #[test]
    fn occupancy_thresholds() {
        let mut vol = TsdfVolume::new([8, 8, 8], 0.002, [0.0; 3]);
        vol.set_voxel(2, 3, 4, -0.5, 1.0);
        vol.set_voxel(5, 5, 5, -0.2, 0.0); // unobserved: stays free
        let occ = vol.occupancy(0.0);
        assert_eq!(occ.count_ones(), 1);
        assert!(occ.get(2, 3, 4));
        assert!(vol.occupancy(-1.0).is_all_zero());
    }

    #[test]
    fn column_height_cases() {
        let dims = SCENE_DIMS;
        let mut vol = TsdfVolume::scene();
        // Empty column reads the floor.
        assert_eq!(vol.column_height(0, 0).unwrap(), 0.0);
        // Top occupied voxel at layer 25 -> top face at 0.052.
        for k in 0..=25 {
            vol.set_voxel(4, 4, k, -0.5, 1.0);
        }
        assert!((vol.column_height(4, 4).unwrap() - 0.052).abs() < 1e-6);
        // Fully occupied column -> 64 * 0.002 = 0.128.
        for k in 0..dims[2] {
            vol.set_voxel(7, 7, k, -0.5, 1.0);
        }
        assert!((vol.column_height(7, 7).unwrap() - 0.128).abs() < 1e-6);
        assert!(vol.column_height(dims[0], 0).is_err());
    }

    #[test]
    fn volume_checkpoint_round_trip() {
        let mut vol = TsdfVolume::new([6, 5, 4], 0.002, [0.1, 0.2, 0.0]);
        vol.set_voxel(1, 2, 3, -0.25, 2.0);
        let mut buf = Vec::new();
        vol.save(&mut buf).unwrap();
        let loaded = TsdfVolume::load(&mut buf.as_slice()).unwrap();
        assert_eq!(vol, loaded);

        // Truncation must produce a load error, not partial state.
        let cut = &buf[..buf.len() / 2];
        assert!(TsdfVolume::load(&mut &cut[..]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(TsdfVolume::load(&mut bad.as_slice()).is_err());
    }

    #[test]
    fn mask_resample_is_nearest_neighbor() {
        let mut mask = MaskGrid::zeros([8, 8, 2]);
        mask.set(2, 2, 0, true);
        let out = mask.resample_rigid(std::f32::consts::FRAC_PI_2, [0.0, 0.0], 0.002);
        // CCW quarter turn: input (2,2) lands on output (5,2).
        assert!(out.get(5, 2, 0));
        assert_eq!(out.count_ones(), 1);
    }
}

//! Volumetric containers, axis projections and patch geometry.
//!
//! Every grid is indexed `(z, y, x)` with `z` the slice dimension and `x`
//! varying fastest in memory. Projections follow a fixed orientation:
//! `Z -> (H, W)`, `Y -> (D, W)`, `X -> (D, H)`.

mod io;

pub use io::{load_mask, load_volume, save_mask, save_probability, save_volume, VolumeFormat};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extents `(D, H, W)`.
pub type Dims = [usize; 3];

pub(crate) fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

/// Dense 3D grid in `(z, y, x)` order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid3<T> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Copy> Grid3<T> {
    pub fn new(dims: Dims, data: Vec<T>) -> Result<Self> {
        if voxel_count(dims) != data.len() {
            return Err(Error::Shape(format!(
                "dims {:?} imply {} voxels but data has {}",
                dims,
                voxel_count(dims),
                data.len()
            )));
        }
        Ok(Grid3 { dims, data })
    }

    pub fn filled(dims: Dims, value: T) -> Self {
        Grid3 {
            dims,
            data: vec![value; voxel_count(dims)],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    data.push(f(z, y, x));
                }
            }
        }
        Grid3 { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> T {
        self.data[self.index(z, y, x)]
    }

    #[inline]
    pub fn set(&mut self, z: usize, y: usize, x: usize, value: T) {
        let i = self.index(z, y, x);
        self.data[i] = value;
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid3<U> {
        Grid3 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Intensity volume with voxel spacing in millimetres.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarVolume {
    grid: Grid3<f32>,
    spacing: [f64; 3],
}

impl ScalarVolume {
    pub fn new(grid: Grid3<f32>) -> Result<Self> {
        Self::with_spacing(grid, [1.0; 3])
    }

    pub fn with_spacing(grid: Grid3<f32>, spacing: [f64; 3]) -> Result<Self> {
        if let Some(i) = grid.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite intensity at linear index {i}"
            )));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Validation(format!("invalid spacing {spacing:?}")));
        }
        Ok(ScalarVolume { grid, spacing })
    }

    pub fn grid(&self) -> &Grid3<f32> {
        &self.grid
    }

    pub fn dims(&self) -> Dims {
        self.grid.dims()
    }

    pub fn data(&self) -> &[f32] {
        self.grid.data()
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }
}

/// Ground-truth or predicted segmentation with values in `{0, 1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    grid: Grid3<u8>,
}

impl BinaryMask {
    pub fn new(grid: Grid3<u8>) -> Result<Self> {
        if let Some(i) = grid.data().iter().position(|&v| v > 1) {
            let [_, h, w] = grid.dims();
            return Err(Error::Validation(format!(
                "mask value {} at voxel (z={}, y={}, x={}) is not 0 or 1",
                grid.data()[i],
                i / (h * w),
                (i / w) % h,
                i % w
            )));
        }
        Ok(BinaryMask { grid })
    }

    pub fn zeros(dims: Dims) -> Self {
        BinaryMask {
            grid: Grid3::filled(dims, 0),
        }
    }

    /// Builds a mask from a predicate over voxel coordinates.
    pub fn from_fn(dims: Dims, f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut f = f;
        BinaryMask {
            grid: Grid3::from_fn(dims, |z, y, x| f(z, y, x) as u8),
        }
    }

    pub(crate) fn from_grid_unchecked(grid: Grid3<u8>) -> Self {
        debug_assert!(grid.data().iter().all(|&v| v <= 1));
        BinaryMask { grid }
    }

    pub fn grid(&self) -> &Grid3<u8> {
        &self.grid
    }

    pub fn dims(&self) -> Dims {
        self.grid.dims()
    }

    pub fn data(&self) -> &[u8] {
        self.grid.data()
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.grid.get(z, y, x) != 0
    }

    pub fn set(&mut self, z: usize, y: usize, x: usize, value: bool) {
        self.grid.set(z, y, x, value as u8);
    }

    pub fn count(&self) -> usize {
        self.grid.data().iter().filter(|&&v| v != 0).count()
    }
}

/// Model output with every value in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVolume {
    grid: Grid3<f32>,
}

impl ProbabilityVolume {
    pub fn new(grid: Grid3<f32>) -> Result<Self> {
        if let Some(i) = grid.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation(format!(
                "probability {} at linear index {i} outside [0, 1]",
                grid.data()[i]
            )));
        }
        Ok(ProbabilityVolume { grid })
    }

    pub fn grid(&self) -> &Grid3<f32> {
        &self.grid
    }

    pub fn dims(&self) -> Dims {
        self.grid.dims()
    }

    pub fn data(&self) -> &[f32] {
        self.grid.data()
    }
}

/// Anything backed by a [`Grid3`] that can be cropped and projected.
pub trait Volume: Sized {
    type Elem: Copy + PartialOrd;

    fn grid(&self) -> &Grid3<Self::Elem>;

    /// Rebuilds a volume of the same kind around `grid`, carrying metadata.
    fn with_grid(&self, grid: Grid3<Self::Elem>) -> Self;
}

impl<T: Copy + PartialOrd> Volume for Grid3<T> {
    type Elem = T;

    fn grid(&self) -> &Grid3<T> {
        self
    }

    fn with_grid(&self, grid: Grid3<T>) -> Self {
        grid
    }
}

impl Volume for ScalarVolume {
    type Elem = f32;

    fn grid(&self) -> &Grid3<f32> {
        &self.grid
    }

    fn with_grid(&self, grid: Grid3<f32>) -> Self {
        ScalarVolume {
            grid,
            spacing: self.spacing,
        }
    }
}

impl Volume for BinaryMask {
    type Elem = u8;

    fn grid(&self) -> &Grid3<u8> {
        &self.grid
    }

    fn with_grid(&self, grid: Grid3<u8>) -> Self {
        BinaryMask { grid }
    }
}

impl Volume for ProbabilityVolume {
    type Elem = f32;

    fn grid(&self) -> &Grid3<f32> {
        &self.grid
    }

    fn with_grid(&self, grid: Grid3<f32>) -> Self {
        ProbabilityVolume { grid }
    }
}

/// Projection axis. `Z` collapses the slice dimension `D`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Z,
    Y,
    X,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Z, Axis::Y, Axis::X];

    /// Position of the collapsed dimension in `(z, y, x)`.
    pub fn dim_index(self) -> usize {
        match self {
            Axis::Z => 0,
            Axis::Y => 1,
            Axis::X => 2,
        }
    }

    /// The two surviving dimensions as `(row_dim, col_dim)` indices.
    pub fn kept_dims(self) -> (usize, usize) {
        match self {
            Axis::Z => (1, 2),
            Axis::Y => (0, 2),
            Axis::X => (0, 1),
        }
    }

    pub fn image_shape(self, dims: Dims) -> (usize, usize) {
        let (r, c) = self.kept_dims();
        (dims[r], dims[c])
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::Z => "z",
            Axis::Y => "y",
            Axis::X => "x",
        })
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "z" => Ok(Axis::Z),
            "y" => Ok(Axis::Y),
            "x" => Ok(Axis::X),
            other => Err(Error::InvalidInput(format!("unknown axis `{other}`"))),
        }
    }
}

/// Row-major 2D image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image2<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Image2<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} image needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Image2 { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn crop(&self, rect: Rect) -> Result<Image2<T>> {
        if rect.row0 + rect.rows > self.rows || rect.col0 + rect.cols > self.cols {
            return Err(Error::Bounds(format!(
                "crop {rect:?} exceeds {}x{} image",
                self.rows, self.cols
            )));
        }
        let mut data = Vec::with_capacity(rect.rows * rect.cols);
        for r in rect.row0..rect.row0 + rect.rows {
            let start = r * self.cols + rect.col0;
            data.extend_from_slice(&self.data[start..start + rect.cols]);
        }
        Ok(Image2 {
            rows: rect.rows,
            cols: rect.cols,
            data,
        })
    }
}

/// Axis projection of a volume, remembering where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct MipImage<T> {
    pub image: Image2<T>,
    pub axis: Axis,
    pub source_dims: Dims,
}

/// Sub-rectangle `(row0, col0, rows, cols)` of a 2D image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Axis-aligned patch `origin .. origin + size` in `(z, y, x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatchBox {
    pub origin: [usize; 3],
    pub size: [usize; 3],
}

impl PatchBox {
    pub fn new(origin: [usize; 3], size: [usize; 3]) -> Self {
        PatchBox { origin, size }
    }

    pub fn cube(origin: [usize; 3], edge: usize) -> Self {
        PatchBox {
            origin,
            size: [edge; 3],
        }
    }

    pub fn check_within(&self, dims: Dims) -> Result<()> {
        if self.size.contains(&0) {
            return Err(Error::Bounds(format!("patch {self:?} has an empty extent")));
        }
        for k in 0..3 {
            if self.origin[k] + self.size[k] > dims[k] {
                return Err(Error::Bounds(format!(
                    "patch {:?} exceeds volume dims {:?} along dimension {k}",
                    self, dims
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, z: usize, y: usize, x: usize) -> bool {
        let p = [z, y, x];
        (0..3).all(|k| p[k] >= self.origin[k] && p[k] < self.origin[k] + self.size[k])
    }
}

fn require_non_empty<T: Copy>(grid: &Grid3<T>) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("volume is empty".into()));
    }
    Ok(())
}

/// Maximum intensity projection along `axis`.
pub fn mip<V: Volume>(volume: &V, axis: Axis) -> Result<MipImage<V::Elem>> {
    let grid = volume.grid();
    require_non_empty(grid)?;
    let image = project_max(grid, axis, |_, _| {});
    Ok(MipImage {
        image,
        axis,
        source_dims: grid.dims(),
    })
}

/// Shared projection kernel. `on_max(pixel, voxel)` is called once per pixel
/// with the first voxel (lowest index along the ray) attaining the maximum.
pub(crate) fn project_max<T: Copy + PartialOrd>(
    grid: &Grid3<T>,
    axis: Axis,
    mut on_max: impl FnMut(usize, usize),
) -> Image2<T> {
    let [d, h, w] = grid.dims();
    let data = grid.data();
    let (rows, cols) = axis.image_shape(grid.dims());
    let mut out = Vec::with_capacity(rows * cols);
    match axis {
        Axis::Z => {
            let plane = h * w;
            for p in 0..plane {
                let mut best = p;
                for z in 1..d {
                    let i = z * plane + p;
                    if data[i] > data[best] {
                        best = i;
                    }
                }
                on_max(p, best);
                out.push(data[best]);
            }
        }
        Axis::Y => {
            for z in 0..d {
                for x in 0..w {
                    let mut best = z * h * w + x;
                    for y in 1..h {
                        let i = (z * h + y) * w + x;
                        if data[i] > data[best] {
                            best = i;
                        }
                    }
                    on_max(z * w + x, best);
                    out.push(data[best]);
                }
            }
        }
        Axis::X => {
            for z in 0..d {
                for y in 0..h {
                    let row = (z * h + y) * w;
                    let mut best = row;
                    for x in 1..w {
                        if data[row + x] > data[best] {
                            best = row + x;
                        }
                    }
                    on_max(z * h + y, best);
                    out.push(data[best]);
                }
            }
        }
    }
    Image2 {
        rows,
        cols,
        data: out,
    }
}

/// Copies the voxels inside `patch` into a new volume of the same kind.
pub fn extract_patch<V: Volume>(volume: &V, patch: PatchBox) -> Result<V> {
    let grid = volume.grid();
    patch.check_within(grid.dims())?;
    let [pd, ph, pw] = patch.size;
    let [z0, y0, x0] = patch.origin;
    let mut data = Vec::with_capacity(pd * ph * pw);
    for z in z0..z0 + pd {
        for y in y0..y0 + ph {
            let start = grid.index(z, y, x0);
            data.extend_from_slice(&grid.data()[start..start + pw]);
        }
    }
    Ok(volume.with_grid(Grid3 {
        dims: patch.size,
        data,
    }))
}

/// Rectangle of the full-volume `axis` projection covered by `patch`.
pub fn mip_patch_region(patch: PatchBox, axis: Axis) -> Rect {
    let (r, c) = axis.kept_dims();
    Rect {
        row0: patch.origin[r],
        col0: patch.origin[c],
        rows: patch.size[r],
        cols: patch.size[c],
    }
}

/// `k x k` block max-pooling of a 2D image.
pub fn maxpool2d_image<T: Copy + PartialOrd>(image: &Image2<T>, k: usize) -> Result<Image2<T>> {
    if k == 0 || !image.rows.is_multiple_of(k) || !image.cols.is_multiple_of(k) {
        return Err(Error::InvalidInput(format!(
            "{}x{} image is not divisible by pooling window {k}",
            image.rows, image.cols
        )));
    }
    if k == 1 {
        return Ok(image.clone());
    }
    let (rows, cols) = (image.rows / k, image.cols / k);
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut best = image.get(r * k, c * k);
            for dr in 0..k {
                for dc in 0..k {
                    let v = image.get(r * k + dr, c * k + dc);
                    if v > best {
                        best = v;
                    }
                }
            }
            data.push(best);
        }
    }
    Ok(Image2 { rows, cols, data })
}

pub fn maxpool2d<T: Copy + PartialOrd>(image: &MipImage<T>, k: usize) -> Result<MipImage<T>> {
    let pooled = maxpool2d_image(&image.image, k)?;
    let mut source_dims = image.source_dims;
    let (r, c) = image.axis.kept_dims();
    source_dims[r] /= k;
    source_dims[c] /= k;
    Ok(MipImage {
        image: pooled,
        axis: image.axis,
        source_dims,
    })
}

/// Block max-pooling with an independent window per dimension.
pub fn maxpool3d_window<V: Volume>(volume: &V, window: [usize; 3]) -> Result<V> {
    let grid = volume.grid();
    let dims = grid.dims();
    for k in 0..3 {
        if window[k] == 0 || !dims[k].is_multiple_of(window[k]) {
            return Err(Error::InvalidInput(format!(
                "dims {dims:?} not divisible by pooling window {window:?}"
            )));
        }
    }
    let out_dims = [dims[0] / window[0], dims[1] / window[1], dims[2] / window[2]];
    let [kz, ky, kx] = window;
    let out = Grid3::from_fn(out_dims, |z, y, x| {
        let mut best = grid.get(z * kz, y * ky, x * kx);
        for dz in 0..kz {
            for dy in 0..ky {
                for dx in 0..kx {
                    let v = grid.get(z * kz + dz, y * ky + dy, x * kx + dx);
                    if v > best {
                        best = v;
                    }
                }
            }
        }
        best
    });
    Ok(volume.with_grid(out))
}

/// `k^3` block max-pooling.
pub fn maxpool3d<V: Volume>(volume: &V, k: usize) -> Result<V> {
    maxpool3d_window(volume, [k; 3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(dims: Dims) -> Grid3<f32> {
        Grid3::from_fn(dims, |z, y, x| (100 * z + 10 * y + x) as f32)
    }

    #[test]
    fn constant_volume_projects_to_constant() {
        let g = Grid3::filled([3, 4, 5], 0.3f32);
        for axis in Axis::ALL {
            let m = mip(&g, axis).unwrap();
            assert!(m.image.data.iter().all(|&v| v == 0.3));
        }
    }

    #[test]
    fn single_bright_voxel_lands_at_its_yx() {
        let mut g = Grid3::filled([2, 2, 2], 0.0f32);
        g.set(1, 0, 1, 9.0);
        let m = mip(&g, Axis::Z).unwrap();
        assert_eq!((m.image.rows, m.image.cols), (2, 2));
        assert_eq!(m.image.data, vec![0.0, 9.0, 0.0, 0.0]);
    }

    #[test]
    fn mip_orientation_shapes() {
        let g = Grid3::filled([2, 3, 5], 1u8);
        assert_eq!(mip(&g, Axis::Z).unwrap().image.data.len(), 15);
        let y = mip(&g, Axis::Y).unwrap().image;
        assert_eq!((y.rows, y.cols), (2, 5));
        let x = mip(&g, Axis::X).unwrap().image;
        assert_eq!((x.rows, x.cols), (2, 3));
    }

    #[test]
    fn empty_volume_is_rejected() {
        let g: Grid3<f32> = Grid3::new([0, 4, 4], vec![]).unwrap();
        assert!(matches!(mip(&g, Axis::Z), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn patch_crops() {
        let g = ramp([4, 4, 4]);
        let whole = extract_patch(&g, PatchBox::cube([0, 0, 0], 4)).unwrap();
        assert_eq!(whole, g);
        let point = extract_patch(&g, PatchBox::cube([1, 2, 3], 1)).unwrap();
        assert_eq!(point.data(), &[123.0]);
        let sub = extract_patch(&g, PatchBox::new([2, 0, 0], [2, 4, 4])).unwrap();
        assert_eq!(sub.dims(), [2, 4, 4]);
        // hand enumeration: z in {2,3}, every (y, x)
        let expected: Vec<f32> = (2..4)
            .flat_map(|z| (0..4).flat_map(move |y| (0..4).map(move |x| (100 * z + 10 * y + x) as f32)))
            .collect();
        assert_eq!(sub.data(), expected.as_slice());
        assert!(matches!(
            extract_patch(&g, PatchBox::new([3, 0, 0], [2, 4, 4])),
            Err(Error::Bounds(_))
        ));
    }

    #[test]
    fn patch_regions_drop_the_projected_extent() {
        let b = PatchBox::cube([10, 32, 64], 64);
        assert_eq!(
            mip_patch_region(b, Axis::Z),
            Rect { row0: 32, col0: 64, rows: 64, cols: 64 }
        );
        assert_eq!(
            mip_patch_region(b, Axis::X),
            Rect { row0: 10, col0: 32, rows: 64, cols: 64 }
        );
        assert_eq!(
            mip_patch_region(b, Axis::Y),
            Rect { row0: 10, col0: 64, rows: 64, cols: 64 }
        );
    }

    #[test]
    fn pooling_basics() {
        let img = Image2::new(4, 4, {
            let mut v = vec![0u8; 16];
            v[2 * 4 + 3] = 1;
            v
        })
        .unwrap();
        assert_eq!(maxpool2d_image(&img, 1).unwrap(), img);
        let p = maxpool2d_image(&img, 2).unwrap();
        assert_eq!(p.data, vec![0, 0, 0, 1]);
        assert!(maxpool2d_image(&img, 3).is_err());
        let g = ramp([4, 4, 4]);
        assert!(maxpool3d(&g, 3).is_err());
        assert_eq!(maxpool3d(&g, 1).unwrap(), g);
        assert_eq!(maxpool3d(&g, 4).unwrap().data(), &[333.0]);
    }

    #[test]
    fn mask_validation_names_the_voxel() {
        let mut data = vec![0u8; 8];
        data[5] = 2;
        let err = BinaryMask::new(Grid3::new([2, 2, 2], data).unwrap()).unwrap_err();
        assert!(err.to_string().contains("(z=1, y=0, x=1)"), "{err}");
    }

    fn grid_strategy() -> impl Strategy<Value = Grid3<f32>> {
        prop::collection::vec(-10.0f32..10.0, 64).prop_map(|v| Grid3::new([4, 4, 4], v).unwrap())
    }

    proptest! {
        #[test]
        fn mip_is_monotone(a in grid_strategy(), bump in prop::collection::vec(0.0f32..5.0, 64)) {
            let b = Grid3::new(a.dims(), a.data().iter().zip(&bump).map(|(x, d)| x + d).collect()).unwrap();
            for axis in Axis::ALL {
                let ma = mip(&a, axis).unwrap();
                let mb = mip(&b, axis).unwrap();
                prop_assert!(ma.image.data.iter().zip(&mb.image.data).all(|(x, y)| x <= y));
            }
        }

        #[test]
        fn pooling_commutes_with_z_projection(a in grid_strategy()) {
            let lhs = maxpool2d(&mip(&a, Axis::Z).unwrap(), 2).unwrap();
            let rhs = mip(&maxpool3d_window(&a, [1, 2, 2]).unwrap(), Axis::Z).unwrap();
            prop_assert_eq!(lhs.image, rhs.image);
        }
    }
}

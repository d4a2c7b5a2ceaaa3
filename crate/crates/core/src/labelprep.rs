//! Connected components and area opening/closing for cleaning binary labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Dims, Grid3};

/// Voxel adjacency in the scikit-image convention: the number of orthogonal
/// steps a neighbour may differ by.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Connectivity {
    /// 6 face neighbours.
    Face = 1,
    /// 18 face and edge neighbours.
    Edge = 2,
    /// All 26 neighbours.
    Full = 3,
}

impl Connectivity {
    /// Maps the integer parameterisation onto 3D adjacency. Values above 3 have
    /// no 3D meaning and are clamped to [`Connectivity::Full`] with a warning.
    pub fn from_rank(rank: u32) -> Result<Self> {
        match rank {
            0 => Err(Error::InvalidInput("connectivity must be at least 1".into())),
            1 => Ok(Connectivity::Face),
            2 => Ok(Connectivity::Edge),
            3 => Ok(Connectivity::Full),
            r => {
                log::warn!("connectivity {r} exceeds the 3D range; clamping to 3 (26-adjacency)");
                Ok(Connectivity::Full)
            }
        }
    }

    pub fn rank(self) -> u32 {
        self as u32
    }

    /// Neighbour offsets `(dz, dy, dx)`.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::with_capacity(26);
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let steps = (dz.abs() + dy.abs() + dx.abs()) as u32;
                    if steps >= 1 && steps <= self.rank() {
                        out.push([dz, dy, dx]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphologyParams {
    pub open_area: usize,
    pub open_connectivity: u32,
    pub close_area: usize,
    pub close_connectivity: u32,
}

impl Default for MorphologyParams {
    fn default() -> Self {
        MorphologyParams {
            open_area: 7,
            open_connectivity: 2,
            close_area: 60,
            close_connectivity: 4,
        }
    }
}

impl MorphologyParams {
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.open_area < 1 {
            issues.push("labelprep.open_area: must be >= 1".to_string());
        }
        if self.close_area < 1 {
            issues.push("labelprep.close_area: must be >= 1".to_string());
        }
        if self.open_connectivity < 1 {
            issues.push("labelprep.open_connectivity: must be >= 1".to_string());
        }
        if self.close_connectivity < 1 {
            issues.push("labelprep.close_connectivity: must be >= 1".to_string());
        }
        issues
    }

    fn checked(&self) -> Result<(Connectivity, Connectivity)> {
        let issues = self.validate();
        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        Ok((
            Connectivity::from_rank(self.open_connectivity)?,
            Connectivity::from_rank(self.close_connectivity)?,
        ))
    }
}

/// Component labelling: `labels` holds 0 outside the selected voxels and
/// `k + 1` for voxels of component `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Components {
    pub labels: Grid3<u32>,
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

pub(crate) fn neighbour_indices(
    dims: Dims,
    offsets: &[[isize; 3]],
    idx: usize,
    mut f: impl FnMut(usize),
) {
    let [d, h, w] = dims;
    let (z, y, x) = ((idx / (h * w)) as isize, ((idx / w) % h) as isize, (idx % w) as isize);
    for o in offsets {
        let (nz, ny, nx) = (z + o[0], y + o[1], x + o[2]);
        if nz < 0 || ny < 0 || nx < 0 || nz >= d as isize || ny >= h as isize || nx >= w as isize {
            continue;
        }
        f((nz as usize * h + ny as usize) * w + nx as usize);
    }
}

/// Labels the maximal connected sets of voxels where `selected` is true.
pub(crate) fn label_where(dims: Dims, selected: &[bool], connectivity: Connectivity) -> Components {
    let offsets = connectivity.offsets();
    let mut labels = vec![0u32; selected.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..selected.len() {
        if !selected[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            neighbour_indices(dims, &offsets, i, |n| {
                if selected[n] && labels[n] == 0 {
                    labels[n] = label;
                    stack.push(n);
                }
            });
        }
        sizes.push(size);
    }
    Components {
        labels: Grid3::new(dims, labels).expect("label buffer matches dims"),
        sizes,
    }
}

pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Components {
    let selected: Vec<bool> = mask.data().iter().map(|&v| v != 0).collect();
    label_where(mask.dims(), &selected, connectivity)
}

/// Removes foreground components with fewer than `area` voxels.
pub fn remove_small_components(mask: &BinaryMask, area: usize, connectivity: Connectivity) -> BinaryMask {
    let comps = connected_components(mask, connectivity);
    let data = comps
        .labels
        .data()
        .iter()
        .map(|&l| (l != 0 && comps.sizes[l as usize - 1] >= area) as u8)
        .collect();
    BinaryMask::from_grid_unchecked(Grid3::new(mask.dims(), data).expect("same dims"))
}

/// Fills background components with fewer than `area` voxels that do not touch
/// the volume border.
pub fn fill_small_holes(mask: &BinaryMask, area: usize, connectivity: Connectivity) -> BinaryMask {
    let dims = mask.dims();
    let [d, h, w] = dims;
    let background: Vec<bool> = mask.data().iter().map(|&v| v == 0).collect();
    let comps = label_where(dims, &background, connectivity);
    let mut exterior = vec![false; comps.count()];
    for (i, &l) in comps.labels.data().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (z, y, x) = (i / (h * w), (i / w) % h, i % w);
        if z == 0 || y == 0 || x == 0 || z + 1 == d || y + 1 == h || x + 1 == w {
            exterior[l as usize - 1] = true;
        }
    }
    let data = mask
        .data()
        .iter()
        .zip(comps.labels.data())
        .map(|(&v, &l)| {
            if v != 0 {
                return 1;
            }
            let k = l as usize - 1;
            (!exterior[k] && comps.sizes[k] < area) as u8
        })
        .collect();
    BinaryMask::from_grid_unchecked(Grid3::new(dims, data).expect("same dims"))
}

pub fn area_opening(mask: &BinaryMask, params: &MorphologyParams) -> Result<BinaryMask> {
    let (open, _) = params.checked()?;
    Ok(remove_small_components(mask, params.open_area, open))
}

pub fn area_closing(mask: &BinaryMask, params: &MorphologyParams) -> Result<BinaryMask> {
    let (_, close) = params.checked()?;
    Ok(fill_small_holes(mask, params.close_area, close))
}

/// Opening followed by closing.
pub fn clean_labels(mask: &BinaryMask, params: &MorphologyParams) -> Result<BinaryMask> {
    let opened = area_opening(mask, params)?;
    area_closing(&opened, params)
}

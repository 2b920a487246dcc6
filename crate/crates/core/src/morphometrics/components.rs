use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, VoxelMask};

/// Voxel adjacency used for component analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    /// Face neighbours.
    Six,
    /// Face and edge neighbours.
    Eighteen,
    /// Face, edge and corner neighbours.
    #[default]
    TwentySix,
}

impl Connectivity {
    /// Whether a non-zero offset in {-1,0,1}^3 counts as adjacent.
    fn admits(self, offset: [isize; 3]) -> bool {
        let nonzero = offset.iter().filter(|&&o| o != 0).count();
        match self {
            Connectivity::Six => nonzero == 1,
            Connectivity::Eighteen => nonzero <= 2,
            Connectivity::TwentySix => true,
        }
    }

    /// Neighbour offsets that precede a voxel in storage order.
    pub fn backward_offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dk in -1..=1isize {
            for dj in -1..=1isize {
                for di in -1..=1isize {
                    let o = [di, dj, dk];
                    let before = (dk, dj, di) < (0, 0, 0);
                    if before && self.admits(o) {
                        out.push(o);
                    }
                }
            }
        }
        out
    }
}

impl TryFrom<u32> for Connectivity {
    type Error = Error;

    fn try_from(value: u32) -> Result<Self> {
        match value {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(Error::invalid(format!("connectivity must be 6, 18 or 26, got {other}"))),
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        };
        write!(f, "{n}")
    }
}

struct DisjointSet {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new() -> Self {
        Self {
            parent: Vec::new(),
            rank: Vec::new(),
        }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.rank.push(0);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            std::cmp::Ordering::Less => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Greater => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb as usize] = ra;
                self.rank[ra as usize] += 1;
            }
        }
    }
}

/// Labels foreground components 1..=count, numbered in order of first
/// appearance in storage order.
pub fn connected_components(mask: &VoxelMask, connectivity: Connectivity) -> (usize, LabelVolume) {
    let g = *mask.geometry();
    let offsets = connectivity.backward_offsets();
    let mut provisional = vec![u32::MAX; g.len()];
    let mut sets = DisjointSet::new();

    let [nx, ny, nz] = g.dims;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = g.index(i, j, k);
                if !mask.data()[idx] {
                    continue;
                }
                let mut mine = u32::MAX;
                for o in &offsets {
                    let (ni, nj, nk) = (i as isize + o[0], j as isize + o[1], k as isize + o[2]);
                    if !mask.get_signed(ni, nj, nk) {
                        continue;
                    }
                    let other = provisional[g.index(ni as usize, nj as usize, nk as usize)];
                    if mine == u32::MAX {
                        mine = other;
                    } else {
                        sets.union(mine, other);
                    }
                }
                if mine == u32::MAX {
                    mine = sets.make();
                }
                provisional[idx] = mine;
            }
        }
    }

    let mut final_label = vec![0u32; sets.parent.len()];
    let mut count = 0u32;
    let mut data = vec![0u32; g.len()];
    for (idx, &p) in provisional.iter().enumerate() {
        if p == u32::MAX {
            continue;
        }
        let root = sets.find(p) as usize;
        if final_label[root] == 0 {
            count += 1;
            final_label[root] = count;
        }
        data[idx] = final_label[root];
    }
    let label_map: BTreeMap<u32, String> = (1..=count).map(|l| (l, format!("component_{l}"))).collect();
    let labels = LabelVolume::new(g, data, label_map).expect("labels come from the map");
    (count as usize, labels)
}

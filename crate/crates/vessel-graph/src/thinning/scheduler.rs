//! Anisotropy-aware scheduling of thinning directions.
//!
//! Each subiteration peels at most one voxel layer from one face direction.
//! To equalize the physical erosion speed on anisotropic grids, the
//! scheduler tracks the accumulated physical depth per direction and always
//! picks the direction with the lowest total, so axes with larger spacing
//! run proportionally fewer subiterations.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceDirection {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl FaceDirection {
    /// Fixed tie-break order.
    pub const ALL: [FaceDirection; 6] = [
        FaceDirection::PosX,
        FaceDirection::NegX,
        FaceDirection::PosY,
        FaceDirection::NegY,
        FaceDirection::PosZ,
        FaceDirection::NegZ,
    ];

    pub fn index(self) -> usize {
        match self {
            FaceDirection::PosX => 0,
            FaceDirection::NegX => 1,
            FaceDirection::PosY => 2,
            FaceDirection::NegY => 3,
            FaceDirection::PosZ => 4,
            FaceDirection::NegZ => 5,
        }
    }

    pub fn axis(self) -> usize {
        self.index() / 2
    }

    /// Offset towards the face this direction peels from.
    pub fn offset(self) -> [i64; 3] {
        match self {
            FaceDirection::PosX => [1, 0, 0],
            FaceDirection::NegX => [-1, 0, 0],
            FaceDirection::PosY => [0, 1, 0],
            FaceDirection::NegY => [0, -1, 0],
            FaceDirection::PosZ => [0, 0, 1],
            FaceDirection::NegZ => [0, 0, -1],
        }
    }
}

#[derive(Debug, Clone)]
pub struct DirectionScheduler {
    accumulated_depth: [f64; 6],
    spacing: [f64; 3],
}

impl DirectionScheduler {
    pub fn new(spacing: [f64; 3]) -> DirectionScheduler {
        DirectionScheduler {
            accumulated_depth: [0.0; 6],
            spacing,
        }
    }

    /// Direction with minimal accumulated depth; ties resolve in the fixed
    /// order +x, -x, +y, -y, +z, -z.
    pub fn next(&self) -> FaceDirection {
        let mut best = FaceDirection::PosX;
        let mut best_depth = f64::INFINITY;
        for d in FaceDirection::ALL {
            let depth = self.accumulated_depth[d.index()];
            if depth < best_depth {
                best_depth = depth;
                best = d;
            }
        }
        best
    }

    /// Record that a subiteration for `dir` completed, deepening it by one
    /// voxel layer of its axis spacing.
    pub fn advance(&mut self, dir: FaceDirection) {
        self.accumulated_depth[dir.index()] += self.spacing[dir.axis()];
    }

    pub fn accumulated_depth(&self) -> [f64; 6] {
        self.accumulated_depth
    }
}

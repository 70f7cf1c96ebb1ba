//! Static centered interval tree for stabbing queries over bounding-box
//! extents.

/// Inclusive interval with a payload.
#[derive(Debug, Clone, Copy)]
pub struct Interval<T> {
    pub lo: i64,
    pub hi: i64,
    pub payload: T,
}

struct TreeNode<T> {
    center: i64,
    /// Intervals containing `center`, sorted ascending by lo.
    by_lo: Vec<Interval<T>>,
    /// The same intervals, sorted descending by hi.
    by_hi: Vec<Interval<T>>,
    left: Option<Box<TreeNode<T>>>,
    right: Option<Box<TreeNode<T>>>,
}

pub struct IntervalTree<T> {
    root: Option<Box<TreeNode<T>>>,
}

impl<T: Copy> IntervalTree<T> {
    pub fn build(intervals: Vec<Interval<T>>) -> IntervalTree<T> {
        IntervalTree {
            root: Self::build_node(intervals),
        }
    }

    fn build_node(intervals: Vec<Interval<T>>) -> Option<Box<TreeNode<T>>> {
        if intervals.is_empty() {
            return None;
        }
        let mut endpoints: Vec<i64> = intervals.iter().flat_map(|i| [i.lo, i.hi]).collect();
        endpoints.sort_unstable();
        let center = endpoints[endpoints.len() / 2];
        let mut here = Vec::new();
        let mut left = Vec::new();
        let mut right = Vec::new();
        for iv in intervals {
            if iv.hi < center {
                left.push(iv);
            } else if iv.lo > center {
                right.push(iv);
            } else {
                here.push(iv);
            }
        }
        let mut by_lo = here.clone();
        by_lo.sort_by_key(|i| i.lo);
        let mut by_hi = here;
        by_hi.sort_by_key(|i| std::cmp::Reverse(i.hi));
        Some(Box::new(TreeNode {
            center,
            by_lo,
            by_hi,
            left: Self::build_node(left),
            right: Self::build_node(right),
        }))
    }

    /// All intervals containing `point` (inclusive bounds).
    pub fn stab(&self, point: i64) -> Vec<Interval<T>> {
        let mut out = Vec::new();
        let mut node = self.root.as_deref();
        while let Some(n) = node {
            if point < n.center {
                for iv in &n.by_lo {
                    if iv.lo > point {
                        break;
                    }
                    out.push(*iv);
                }
                node = n.left.as_deref();
            } else if point > n.center {
                for iv in &n.by_hi {
                    if iv.hi < point {
                        break;
                    }
                    out.push(*iv);
                }
                node = n.right.as_deref();
            } else {
                out.extend(n.by_lo.iter().copied());
                break;
            }
        }
        out
    }
}

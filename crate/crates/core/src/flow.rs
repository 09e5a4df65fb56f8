//! Closed-form counts of attention-matrix cells by the views their query and
//! key come from.
//!
//! A cell is cross-view when it touches a token carrying the other view's
//! state: in a per-view stream that is any cell whose query or key is the
//! visiting cross-token (including its self cell); in the joint stream it is
//! any cell whose query and key belong to different views.

use serde::Serialize;

use crate::model::{Fusion, FusionMode};

/// Cell counts for one attention pass, or summed over several.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AttentionFlow {
    pub intra_view_edges: usize,
    pub cross_view_edges: usize,
}

impl AttentionFlow {
    pub fn total(&self) -> usize {
        self.intra_view_edges + self.cross_view_edges
    }
}

impl std::ops::Add for AttentionFlow {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            intra_view_edges: self.intra_view_edges + rhs.intra_view_edges,
            cross_view_edges: self.cross_view_edges + rhs.cross_view_edges,
        }
    }
}

/// Attention passes executed by one layer. Two-stream layers contribute one
/// pass per stream and step; the joint stream contributes one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerFlow {
    pub passes: Vec<AttentionFlow>,
}

impl LayerFlow {
    pub fn total(&self) -> AttentionFlow {
        self.passes.iter().copied().fold(AttentionFlow::default(), |a, b| a + b)
    }

    /// Largest cross-view count of any single pass.
    pub fn max_pass_cross(&self) -> usize {
        self.passes.iter().map(|p| p.cross_view_edges).max().unwrap_or(0)
    }
}

fn isolated(n: usize) -> AttentionFlow {
    AttentionFlow { intra_view_edges: n * n, cross_view_edges: 0 }
}

/// One stream's pass with a visiting cross-token at the last index.
fn visited(n: usize) -> AttentionFlow {
    let cross = 2 * n - 1;
    AttentionFlow { intra_view_edges: n * n - cross, cross_view_edges: cross }
}

/// Per-layer attention flow for `patches` tokens per view.
pub fn count_attention_flow(patches: usize, layers: usize, mode: FusionMode) -> Vec<LayerFlow> {
    let n = patches + 3;
    (0..layers)
        .map(|layer| {
            let passes = match mode.fusion {
                Fusion::SingleHor | Fusion::SingleVer => vec![isolated(n)],
                Fusion::LateNoAttention => vec![isolated(n); 2],
                Fusion::CrossToken if layer < mode.cross_layer_start => vec![isolated(n); 2],
                Fusion::CrossToken => vec![visited(n); 4],
                Fusion::FullAttention => {
                    let half = patches + 2;
                    vec![AttentionFlow { intra_view_edges: 2 * half * half, cross_view_edges: 2 * half * half }]
                }
            };
            LayerFlow { passes }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mode(fusion: Fusion, start: usize) -> FusionMode {
        FusionMode { fusion, use_preop_va: true, cross_layer_start: start }
    }

    #[test]
    fn four_patch_counts() {
        let full = count_attention_flow(4, 1, mode(Fusion::FullAttention, 0));
        assert_eq!(full[0].total().cross_view_edges, 72);
        let ct = count_attention_flow(4, 2, mode(Fusion::CrossToken, 1));
        assert_eq!(ct[0].total().cross_view_edges, 0);
        assert_eq!(ct[1].passes[0].cross_view_edges, 13);
        assert_eq!(ct[1].total().cross_view_edges, 52);
        assert_eq!(ct[1].total().total(), 4 * 49);
    }

    #[test]
    fn late_fusion_never_crosses() {
        for layer in count_attention_flow(9, 6, mode(Fusion::LateNoAttention, 0)) {
            assert_eq!(layer.total().cross_view_edges, 0);
        }
    }
}

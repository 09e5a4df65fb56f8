//! Attention-flow counts against a token-by-token simulation.

use ctt_core::flow::{count_attention_flow, AttentionFlow};
use ctt_core::model::{Fusion, FusionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum View {
    Hor,
    Ver,
}

/// Cells of one attention pass. In a per-view stream (`home` set) a cell is
/// cross-view when its query or key was last written by the other stream;
/// in the joint stream when query and key come from different views.
fn pass(home: Option<View>, tokens: &[View]) -> AttentionFlow {
    let mut flow = AttentionFlow::default();
    for &q in tokens {
        for &k in tokens {
            let cross = match home {
                Some(h) => q != h || k != h,
                None => q != k,
            };
            if cross {
                flow.cross_view_edges += 1;
            } else {
                flow.intra_view_edges += 1;
            }
        }
    }
    flow
}

fn simulate(patches: usize, layers: usize, mode: FusionMode) -> Vec<Vec<AttentionFlow>> {
    let n = patches + 3;
    let mut out = Vec::new();
    for layer in 0..layers {
        let mut passes = Vec::new();
        match mode.fusion {
            Fusion::SingleHor => passes.push(pass(Some(View::Hor), &vec![View::Hor; n])),
            Fusion::SingleVer => passes.push(pass(Some(View::Ver), &vec![View::Ver; n])),
            Fusion::FullAttention => {
                let mut joint = vec![View::Hor; patches + 2];
                joint.extend(vec![View::Ver; patches + 2]);
                passes.push(pass(None, &joint));
            }
            Fusion::LateNoAttention | Fusion::CrossToken => {
                let mut hor = vec![View::Hor; n];
                let mut ver = vec![View::Ver; n];
                if mode.fusion == Fusion::CrossToken && layer >= mode.cross_layer_start {
                    for _step in 0..2 {
                        // Swap the last slots, then each stream writes every
                        // token it holds.
                        std::mem::swap(&mut hor[n - 1], &mut ver[n - 1]);
                        passes.push(pass(Some(View::Hor), &hor));
                        passes.push(pass(Some(View::Ver), &ver));
                        hor.fill(View::Hor);
                        ver.fill(View::Ver);
                    }
                } else {
                    passes.push(pass(Some(View::Hor), &hor));
                    passes.push(pass(Some(View::Ver), &ver));
                }
            }
        }
        out.push(passes);
    }
    out
}

fn mode(fusion: Fusion, start: usize) -> FusionMode {
    FusionMode { fusion, use_preop_va: true, cross_layer_start: start }
}

#[test]
fn closed_form_matches_simulation() {
    for p in 1..=16 {
        for fusion in Fusion::ALL {
            for start in [0, 1, 3] {
                let m = mode(fusion, start);
                let counted: Vec<Vec<AttentionFlow>> =
                    count_attention_flow(p, 3, m).into_iter().map(|l| l.passes).collect();
                // Pass order within a layer is not part of the contract.
                let sort = |mut v: Vec<Vec<AttentionFlow>>| {
                    for l in &mut v {
                        l.sort_by_key(|f| (f.intra_view_edges, f.cross_view_edges));
                    }
                    v
                };
                assert_eq!(sort(counted), sort(simulate(p, 3, m)), "P={p} {fusion:?} start={start}");
            }
        }
    }
}

#[test]
fn cross_token_passes_carry_less_than_full_attention() {
    for p in 1..=16 {
        let ct = count_attention_flow(p, 2, mode(Fusion::CrossToken, 0));
        let full = count_attention_flow(p, 2, mode(Fusion::FullAttention, 0));
        assert!(ct[0].max_pass_cross() < full[0].max_pass_cross(), "P={p}");
        // Per step across both streams as well.
        assert!(2 * ct[0].max_pass_cross() < full[0].total().cross_view_edges, "P={p}");
    }
}

#[test]
fn per_layer_totals_cross_over_at_three_patches() {
    // Both exchange steps together only undercut one joint pass from P=3 on.
    for p in 1..=16 {
        let ct = count_attention_flow(p, 1, mode(Fusion::CrossToken, 0))[0].total().cross_view_edges;
        let full = count_attention_flow(p, 1, mode(Fusion::FullAttention, 0))[0].total().cross_view_edges;
        assert_eq!(ct < full, p >= 3, "P={p}: {ct} vs {full}");
    }
}

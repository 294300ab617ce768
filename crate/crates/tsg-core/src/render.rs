//! SVG rendering of a run: world geometry, traversable nodes, the selected
//! cluster, extracted rooms, and trajectories.

use crate::pipeline::RunArtifacts;
use crate::rooms::Room;
use crate::world::{GroundKind, Scenario, RAIL_HEIGHT};
use serde::{Deserialize, Serialize};

const SCALE: f64 = 60.0; // px per meter
const MARGIN: f64 = 0.6; // meters

/// Everything needed to re-render a run without re-executing it.
#[derive(Serialize, Deserialize)]
pub struct RenderState {
    pub scenario: String,
    pub trav_nodes: Vec<[f64; 2]>,
    pub cluster_nodes: Vec<[f64; 2]>,
    pub rooms: Vec<Room>,
    pub gt_traj: Vec<[f64; 2]>,
    pub est_traj: Vec<[f64; 2]>,
    pub dr_traj: Vec<[f64; 2]>,
}

pub fn render_state(scenario: &Scenario, artifacts: &RunArtifacts) -> RenderState {
    let trav_cfg = crate::traversability::TravConfig {
        cell_size: artifacts.trav_grid.cell_size,
        ..Default::default()
    };
    let cluster = artifacts.clusters.iter().rev().flatten().next();
    RenderState {
        scenario: scenario.to_json(),
        trav_nodes: artifacts
            .trav_grid
            .nodes(&trav_cfg)
            .iter()
            .map(|n| [n.center.x, n.center.y])
            .collect(),
        cluster_nodes: cluster
            .map(|c| c.nodes.iter().map(|n| [n.center.x, n.center.y]).collect())
            .unwrap_or_default(),
        rooms: artifacts.tracker.rooms.clone(),
        gt_traj: artifacts.gt_traj.iter().map(|p| [p.x, p.y]).collect(),
        est_traj: artifacts.est_traj.iter().map(|p| [p.x, p.y]).collect(),
        dr_traj: artifacts.dr_traj.iter().map(|p| [p.x, p.y]).collect(),
    }
}

pub fn render_state_json(scenario: &Scenario, artifacts: &RunArtifacts) -> String {
    serde_json::to_string(&render_state(scenario, artifacts)).expect("render state")
}

pub fn render_svg(scenario: &Scenario, artifacts: &RunArtifacts) -> String {
    render_svg_from_state(scenario, &render_state(scenario, artifacts))
}

pub fn render_svg_from_state(scenario: &Scenario, state: &RenderState) -> String {
    let (w, h) = scenario.extent;
    let width = ((w + 2.0 * MARGIN) * SCALE).ceil();
    let height = ((h + 2.0 * MARGIN) * SCALE).ceil();
    let x = |wx: f64| (wx + MARGIN) * SCALE;
    let y = |wy: f64| height - (wy + MARGIN) * SCALE;

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    s.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n"
    ));

    // ground / void cells
    let (nx, ny) = scenario.grid_dims();
    let cell = scenario.cell_size;
    for j in 0..ny {
        for i in 0..nx {
            let kind = scenario.ground_kind_at_index(i as i64, j as i64);
            let color = match kind {
                GroundKind::Ground => "#f2f2f2",
                GroundKind::Void => "#b9b9c4",
            };
            s.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\"/>\n",
                x(i as f64 * cell),
                y((j + 1) as f64 * cell),
                cell * SCALE,
                cell * SCALE,
                color
            ));
        }
    }

    // traversable nodes (magenta) and the selected cluster (cyan)
    for n in &state.trav_nodes {
        s.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.2\" fill=\"#d540c8\" fill-opacity=\"0.6\"/>\n",
            x(n[0]),
            y(n[1])
        ));
    }
    for n in &state.cluster_nodes {
        s.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"1.8\" fill=\"#14b8c4\"/>\n",
            x(n[0]),
            y(n[1])
        ));
    }

    // obstacles: walls black, rails orange
    for ob in &scenario.obstacles {
        let color = if ob.z_high <= RAIL_HEIGHT + 1e-9 { "#e8862a" } else { "#222222" };
        s.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{}\" stroke-width=\"3.5\"/>\n",
            x(ob.p0.x),
            y(ob.p0.y),
            x(ob.p1.x),
            y(ob.p1.y),
            color
        ));
    }

    // rooms: green outlines with ids
    for room in &state.rooms {
        let len_b = room.extents.1.unwrap_or(room.observed_span.max(0.5));
        let rect = crate::metrics::OrientedRect {
            center: room.center,
            axis: room.axis,
            half: (room.extents.0 / 2.0, len_b / 2.0),
        };
        let c = rect.corners();
        let pts: Vec<String> =
            c.iter().map(|p| format!("{:.1},{:.1}", x(p.x), y(p.y))).collect();
        s.push_str(&format!(
            "<polygon points=\"{}\" fill=\"none\" stroke=\"#2f9e44\" stroke-width=\"2.5\"/>\n",
            pts.join(" ")
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" fill=\"#2f9e44\">R{}</text>\n",
            x(room.center.x),
            y(room.center.y),
            room.id
        ));
    }

    // trajectories: ground truth gray, dead reckoning red, estimate blue
    for (traj, color, width, dash) in [
        (&state.gt_traj, "#999999", 1.5, "none"),
        (&state.dr_traj, "#d64545", 1.2, "4,3"),
        (&state.est_traj, "#2b5fd9", 1.8, "none"),
    ] {
        if traj.len() < 2 {
            continue;
        }
        let pts: Vec<String> =
            traj.iter().map(|p| format!("{:.1},{:.1}", x(p[0]), y(p[1]))).collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\" stroke-dasharray=\"{}\"/>\n",
            pts.join(" "),
            color,
            width,
            dash
        ));
    }

    s.push_str("</svg>\n");
    s
}

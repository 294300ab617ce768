// temporary: long_corridor flush event trace
use tsg_core::freespace::Backend;
use tsg_core::pipeline::*;
use tsg_core::rooms::Strategy;
use tsg_core::world::*;

fn main() {
    let sc = build_canonical(CanonicalScenario::LongCorridor);
    let mut cfg = PipelineConfig::default();
    cfg.cluster.backend = Backend::Traversability;
    cfg.rooms.strategy = Strategy::Flush;
    let art = run_traverses(&sc, &cfg, 3, 2).unwrap();
    for e in &art.events {
        println!("kf {:3} trav {} room {} redet {} {:?} center ({:5.2},{:5.2}) extents ({:.2},{:?}) axis {:.2} span {:.1}",
            e.keyframe, art.traverse_of(e.keyframe), e.room_id, e.redetected, e.candidate.kind,
            e.candidate.center.x, e.candidate.center.y, e.candidate.extents.0, e.candidate.extents.1.map(|v| (v*100.0).round()/100.0), e.candidate.axis, e.candidate.observed_span);
    }
    // indicator trace every 4 kf
    for (k, cl) in art.clusters.iter().enumerate().step_by(4) {
        let gt = art.gt_traj[k];
        match cl {
            Some(c) => {
                let w = c.width_profile.last().map(|x| x.1).unwrap_or(f64::NAN);
                println!("kf {:3} gt ({:5.1},{:5.1}) nodes {:4} width {:5.2} axis {:5.2}", k, gt.x, gt.y, c.nodes.len(), w, c.principal_axis);
            }
            None => println!("kf {:3} gt ({:5.1},{:5.1}) NO CLUSTER", k, gt.x, gt.y),
        }
    }
}

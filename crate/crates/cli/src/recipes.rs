//! One ready-to-run configuration per reference figure.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::config::{parse_config, RunConfig};

pub struct Recipe {
    pub name: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

const FIG8: &str = "mode = run2d
[packet]
q = 0.5, 1, 1.5
[potential]
width = 2
[evolution]
t_final = 300
l_max = 50
[output]
profiles = 0, 90, 180
";

const FIG12: &str = "mode = run2d
[packet]
y0 = 0, 1.5, 3
[potential]
width = 2
[evolution]
t_final = 300
l_max = 70
[output]
profiles = 180
";

const FIG16: &str = "mode = run2d
[packet]
delta = 2
q = 0.5, 1, 1.5
[potential]
width = 0.5
[evolution]
t_final = 300
[output]
profiles = 0, 90, 180
";

pub const RECIPES: [Recipe; 19] = [
    Recipe { name: "fig01", summary: "narrow packet, snapshots up to t = 200", text: "mode = run1d\n" },
    Recipe {
        name: "fig02",
        summary: "narrow packet at t = 5000",
        text: "mode = run1d\ntier = long\n[evolution]\nt_final = 5000\n[output]\nsnapshots = 5000\n",
    },
    Recipe {
        name: "fig03",
        summary: "wide packet on a narrow well, snapshots up to t = 300",
        text: "mode = run1d\n[packet]\ndelta = 2\n[potential]\nwidth = 0.5\n[evolution]\nt_final = 300\n",
    },
    Recipe {
        name: "fig04",
        summary: "wide packet on a narrow well at t = 5000",
        text: "mode = run1d\ntier = long\n[packet]\ndelta = 2\n[potential]\nwidth = 0.5\n[evolution]\nt_final = 5000\n[output]\nsnapshots = 5000\n",
    },
    Recipe {
        name: "fig05",
        summary: "square packet on a square well, grid solver against the contour integral at t = 1000",
        text: "mode = compare\n[packet]\nshape = square\n[potential]\nshape = square\n[evolution]\nt_final = 1000\ndx = 0.01\ndt = 0.025\nhalf_width = 1750\n[output]\nsnapshots = 1000\nwindow = -150, 150\n",
    },
    Recipe {
        name: "fig06",
        summary: "narrow packet launched from x0 = -50, t = 3000",
        text: "mode = run1d\n[packet]\nx0 = -50\n[evolution]\nt_final = 3000\n[output]\nsnapshots = 3000\n",
    },
    Recipe {
        name: "fig07",
        summary: "|psi(0)| against time for the fig01 run",
        text: "mode = run1d\ntier = long\n[evolution]\nt_final = 5000\n[output]\nsnapshots = 5000\nobservables = norm, center_amplitude\n",
    },
    Recipe { name: "fig08", summary: "2D, three momenta, 180 deg", text: FIG8 },
    Recipe { name: "fig09", summary: "2D, three momenta, 90 deg", text: FIG8 },
    Recipe { name: "fig10", summary: "2D, three momenta, 0 deg", text: FIG8 },
    Recipe {
        name: "fig11",
        summary: "2D backward against forward scattering",
        text: "mode = run2d\n[potential]\nwidth = 2\n[evolution]\nt_final = 300\n[output]\nprofiles = 180, 0\n",
    },
    Recipe { name: "fig12", summary: "2D impact parameters 0, 1.5, 3 at 180 deg", text: FIG12 },
    Recipe {
        name: "fig13",
        summary: "2D impact parameters 0, 1.5, 3 at 0 deg",
        text: "mode = run2d\n[packet]\ny0 = 0, 1.5, 3\n[potential]\nwidth = 2\n[evolution]\nt_final = 300\nl_max = 70\n[output]\nprofiles = 0\n",
    },
    Recipe {
        name: "fig14",
        summary: "Re and Im of Phi inside the well, m = 20, t = 150",
        text: "mode = run2d\n[potential]\nwidth = 2\n[evolution]\nt_final = 150\n[output]\nprofiles = 180\nprofile_kind = full\nsnapshots = 150\n",
    },
    Recipe {
        name: "fig15",
        summary: "Re and Im of Phi inside the well, m = 5, t = 150",
        text: "mode = run2d\n[potential]\nwidth = 2\n[evolution]\nmass = 5\nt_final = 150\n[output]\nprofiles = 180\nprofile_kind = full\nsnapshots = 150\n",
    },
    Recipe { name: "fig16", summary: "2D wide packet, 180 deg", text: FIG16 },
    Recipe { name: "fig17", summary: "2D wide packet, 90 deg", text: FIG16 },
    Recipe { name: "fig18", summary: "2D wide packet, 0 deg", text: FIG16 },
    Recipe {
        name: "fig19",
        summary: "2D shallow well, V0 = 0.03, 180 deg",
        text: "mode = run2d\n[potential]\nwidth = 2\ndepth = 0.03\n[evolution]\nt_final = 300\n[output]\nprofiles = 180\n",
    },
];

impl Recipe {
    /// The recipe as a validated config writing into `out/<name>`.
    pub fn config(&self) -> RunConfig {
        let mut c = parse_config(self.text).unwrap_or_else(|e| panic!("recipe {} is invalid: {e}", self.name));
        c.output_dir = PathBuf::from("out").join(self.name);
        c
    }

    pub fn file_text(&self) -> String {
        format!("# {}: {}\n{}", self.name, self.summary, self.config().to_text())
    }
}

/// Writes `<dir>/<name>.cfg` for every recipe.
pub fn emit_figure_recipes(dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    RECIPES
        .iter()
        .map(|r| {
            let path = dir.join(format!("{}.cfg", r.name));
            fs::write(&path, r.file_text())?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Mode, Tier};
    use wellscatter::model::{PacketShape, PotentialShape};

    struct Caption {
        name: &'static str,
        mode: Mode,
        delta: f64,
        x0: f64,
        qs: &'static [f64],
        y0s: &'static [f64],
        w: f64,
        depth: f64,
        mass: f64,
        t: f64,
        angles: &'static [f64],
    }

    const THREE_Q: &[f64] = &[0.5, 1.0, 1.5];
    const ALL_ANGLES: &[f64] = &[0.0, 90.0, 180.0];

    #[rustfmt::skip]
    const CAPTIONS: [Caption; 19] = [
        Caption { name: "fig01", mode: Mode::Run1d, delta: 0.5, x0: -10.0, qs: &[1.0], y0s: &[0.0], w: 1.0, depth: 1.0, mass: 20.0, t: 200.0, angles: &[] },
        Caption { name: "fig02", mode: Mode::Run1d, delta: 0.5, x0: -10.0, qs: &[1.0], y0s: &[0.0], w: 1.0, depth: 1.0, mass: 20.0, t: 5000.0, angles: &[] },
        Caption { name: "fig03", mode: Mode::Run1d, delta: 2.0, x0: -10.0, qs: &[1.0], y0s: &[0.0], w: 0.5, depth: 1.0, mass: 20.0, t: 300.0, angles: &[] },
        Caption { name: "fig04", mode: Mode::Run1d, delta: 2.0, x0: -10.0, qs: &[1.0], y0s: &[0.0], w: 0.5, depth: 1.0, mass: 20.0, t: 5000.0, angles: &[] },
        Caption { name: "fig05", mode: Mode::Compare, delta: 0.5, x0: -10.0, qs: &[1.0], y0s: &[0.0], w: 1.0, depth: 1.0, mass: 20.0, t: 1000.0, angles: &[] },
        Caption { name: "fig06", mode: Mode::Run1d, delta: 0.5, x0: -50.0, qs: &[1.0], y0s: &[0.0], w: 1.0, depth: 1.0, mass: 20.0, t: 3000.0, angles: &[] },
        Caption { name: "fig07", mode: Mode::Run1d, delta: 0.5, x0: -10.0, qs: &[1.0], y0s: &[0.0], w: 1.0, depth: 1.0, mass: 20.0, t: 5000.0, angles: &[] },
        Caption { name: "fig08", mode: Mode::Run2d, delta: 0.5, x0: -10.0, qs: THREE_Q, y0s: &[0.0], w: 2.0, depth: 1.0, mass: 20.0, t: 300.0, angles: ALL_ANGLES },
        Caption { name: "fig09", mode: Mode::Run2d, delta: 0.5, x0: -10.0, qs: THREE_Q, y0s: &[0.0], w: 2.0, depth: 1.0, mass: 20.0, t: 300.0, angles: ALL_ANGLES },
        Caption { name: "fig10", mode: Mode::Run2d, delta: 0.5, x0: -10.0, qs: THREE_Q, y0s: &[0.0], w: 2.0, depth: 1.0, mass: 20.0, t: 300.0, angles: ALL_ANGLES },
        Caption { name: "fig11", mode: Mode::Run2d, delta: 0.5, x0: -10.0, qs: &[1.0], y0s: &[0.0], w: 2.0, depth: 1.0, mass: 20.0, t: 300.0, angles: &[180.0, 0.0] },
        Caption { name: "fig12", mode: Mode::Run2d, delta: 0.5, x0: -10.0, qs: &[1.0], y0s: &[0.0, 1.5, 3.0], w: 2.0, depth: 1.0, mass: 20.0, t: 300.0, angles: &[180.0] },
        Caption { name: "fig13", mode: Mode::Run2d, delta: 0.5, x0: -10.0, qs: &[1.0], y0s: &[0.0, 1.5, 3.0], w: 2.0, depth: 1.0, mass: 20.0, t: 300.0, angles: &[0.0] },
        Caption { name: "fig14", mode: Mode::Run2d, delta: 0.5, x0: -10.0, qs: &[1.0], y0s: &[0.0], w: 2.0, depth: 1.0, mass: 20.0, t: 150.0, angles: &[180.0] },
        Caption { name: "fig15", mode: Mode::Run2d, delta: 0.5, x0: -10.0, qs: &[1.0], y0s: &[0.0], w: 2.0, depth: 1.0, mass: 5.0, t: 150.0, angles: &[180.0] },
        Caption { name: "fig16", mode: Mode::Run2d, delta: 2.0, x0: -10.0, qs: THREE_Q, y0s: &[0.0], w: 0.5, depth: 1.0, mass: 20.0, t: 300.0, angles: ALL_ANGLES },
        Caption { name: "fig17", mode: Mode::Run2d, delta: 2.0, x0: -10.0, qs: THREE_Q, y0s: &[0.0], w: 0.5, depth: 1.0, mass: 20.0, t: 300.0, angles: ALL_ANGLES },
        Caption { name: "fig18", mode: Mode::Run2d, delta: 2.0, x0: -10.0, qs: THREE_Q, y0s: &[0.0], w: 0.5, depth: 1.0, mass: 20.0, t: 300.0, angles: ALL_ANGLES },
        Caption { name: "fig19", mode: Mode::Run2d, delta: 0.5, x0: -10.0, qs: &[1.0], y0s: &[0.0], w: 2.0, depth: 0.03, mass: 20.0, t: 300.0, angles: &[180.0] },
    ];

    #[test]
    fn one_recipe_per_figure() {
        assert_eq!(RECIPES.len(), 19);
        for (i, r) in RECIPES.iter().enumerate() {
            assert_eq!(r.name, format!("fig{:02}", i + 1));
        }
    }

    #[test]
    fn recipes_match_caption_table() {
        for (r, cap) in RECIPES.iter().zip(&CAPTIONS) {
            assert_eq!(r.name, cap.name);
            let c = r.config();
            let p = c.packet();
            assert_eq!(c.mode, cap.mode, "{}", r.name);
            assert_eq!((p.width, p.x0), (cap.delta, cap.x0), "{}", r.name);
            let mut qs: Vec<f64> = c.packets.iter().map(|p| p.q).collect();
            qs.dedup();
            assert_eq!(qs, cap.qs, "{}", r.name);
            let y0s: Vec<f64> = c.packets.iter().filter(|p| p.q == cap.qs[0]).map(|p| p.y0).collect();
            assert_eq!(y0s, cap.y0s, "{}", r.name);
            assert_eq!((c.potential.width, c.potential.depth), (cap.w, cap.depth), "{}", r.name);
            assert_eq!((c.evolution.mass, c.evolution.t_final), (cap.mass, cap.t), "{}", r.name);
            let angles: Vec<f64> = c.profiles.iter().map(|p| p.0).collect();
            assert_eq!(angles, cap.angles, "{}", r.name);
            assert!(c.profiles.iter().all(|p| p.1 == cap.t), "{}", r.name);
        }
    }

    #[test]
    fn square_shapes_only_for_the_oracle_figure() {
        for r in &RECIPES {
            let c = r.config();
            let square = c.packet().shape == PacketShape::Square;
            assert_eq!(square, r.name == "fig05", "{}", r.name);
            assert_eq!(c.potential.shape == PotentialShape::Square, square, "{}", r.name);
        }
    }

    #[test]
    fn only_t5000_runs_are_long() {
        for r in &RECIPES {
            let c = r.config();
            assert_eq!(c.tier == Tier::Long, c.evolution.t_final >= 5000.0, "{}", r.name);
        }
    }

    #[test]
    fn fig12_has_three_impact_parameters() {
        let c = RECIPES[11].config();
        let y0s: Vec<f64> = c.packets.iter().map(|p| p.y0).collect();
        assert_eq!(y0s, vec![0.0, 1.5, 3.0]);
    }

    #[test]
    fn fig08_recipe_matches_caption() {
        let c = RECIPES[7].config();
        assert_eq!(c.potential.width, 2.0);
        assert_eq!(c.discretization.l_max, 50);
        assert_eq!(c.evolution.t_final, 300.0);
        assert_eq!(c.profiles, vec![(0.0, 300.0), (90.0, 300.0), (180.0, 300.0)]);
    }

    #[test]
    fn emitted_recipes_round_trip() {
        let dir = std::env::temp_dir().join(format!("wellscatter-recipes-{}", std::process::id()));
        let paths = emit_figure_recipes(&dir).unwrap();
        assert_eq!(paths.len(), 19);
        for (path, r) in paths.iter().zip(&RECIPES) {
            let parsed = parse_config(&fs::read_to_string(path).unwrap()).unwrap();
            assert_eq!(parsed, r.config());
        }
        fs::remove_dir_all(&dir).unwrap();
    }
}

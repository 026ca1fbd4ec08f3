use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub summary: &'static str,
    /// Result of the underlying theory the scenario exercises.
    pub anchor: &'static str,
    /// Sections that must be present besides `[grid]` where noted.
    pub sections: &'static [&'static str],
    pub required: &'static [&'static str],
    pub optional: &'static [&'static str],
}

impl ScenarioInfo {
    pub fn allows(&self, key: &str) -> bool {
        self.required.contains(&key) || self.optional.contains(&key)
    }
}

pub const SCENARIOS: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "simulate",
        summary: "free evolution e^{-tF} f0 sampled at evenly spaced times",
        anchor: "Fourier-multiplier semigroup and Plancherel convention",
        sections: &["grid", "symbol", "init"],
        required: &["T"],
        optional: &["samples"],
    },
    ScenarioInfo {
        name: "stabilize",
        summary: "closed loop with the explicit feedback gains; Lyapunov trace and fitted decay rate",
        anchor: "stabilization from thick sets with explicit feedback and decay rate",
        sections: &["grid", "symbol", "mask", "init"],
        required: &["R", "T"],
        optional: &[
            "C",
            "seed",
            "trials",
            "iterations",
            "dt",
            "integrator",
            "snapshot_every",
            "tail_fraction",
            "adjoint_order",
        ],
    },
    ScenarioInfo {
        name: "observability",
        summary: "lower bound on the observability constant from random Gaussian probes",
        anchor: "observability characterization of cost-uniform approximate null-controllability",
        sections: &["grid", "symbol", "mask"],
        required: &["T", "epsilon", "seed"],
        optional: &["probes", "width_min", "width_max", "steps"],
    },
    ScenarioInfo {
        name: "necessity",
        summary: "modulated probes marching into a void of the control set",
        anchor: "necessity of thickness for stabilizability (Gaussian probe argument)",
        sections: &["grid", "symbol", "mask"],
        required: &["T", "epsilon", "C", "centers", "width"],
        optional: &["steps"],
    },
    ScenarioInfo {
        name: "negative-limit",
        summary: "implied observability constants under the rescaled semigroup e^{-tF(|D|/h)}",
        anchor: "failure of null-controllability for bounded symbols (scaling argument)",
        sections: &["grid", "symbol", "init"],
        required: &["h_ladder", "center", "radius", "T"],
        optional: &["steps"],
    },
    ScenarioInfo {
        name: "qa",
        summary: "Bernstein moments log M_k, ratios M_k/M_{k+1} and Denjoy-Carleman partial sums",
        anchor: "Denjoy-Carleman theorem and log-convex moment sequences",
        sections: &["symbol"],
        required: &["k_max"],
        optional: &[],
    },
    ScenarioInfo {
        name: "thick-check",
        summary: "measured thickness of the control set at a window scale",
        anchor: "definition of gamma-thick sets at scale L",
        sections: &["grid", "mask"],
        required: &["L"],
        optional: &["stride"],
    },
    ScenarioInfo {
        name: "cubes",
        summary: "good/bad cube labels from Bernstein-type derivative bounds",
        anchor: "good and bad cubes in the observability proof",
        sections: &["grid", "symbol", "init"],
        required: &["T", "epsilon", "L"],
        optional: &["beta_max"],
    },
    ScenarioInfo {
        name: "synthesize",
        summary: "penalised dual synthesis of a piecewise-constant control from the mask",
        anchor: "duality between observability and approximate null-controllability",
        sections: &["grid", "symbol", "mask", "init"],
        required: &["T", "epsilon"],
        optional: &["slices"],
    },
    ScenarioInfo {
        name: "kovrijkine",
        summary: "empirical spectral-inequality constant C_emp(R) and its log-linear fit",
        anchor: "Kovrijkine spectral inequality on thick sets",
        sections: &["grid", "mask"],
        required: &["radii", "seed"],
        optional: &["c_n", "trials", "iterations"],
    },
];

pub fn find(name: &str) -> Option<&'static ScenarioInfo> {
    SCENARIOS.iter().find(|s| s.name == name)
}

pub fn names() -> Vec<&'static str> {
    SCENARIOS.iter().map(|s| s.name).collect()
}

pub fn render_text() -> String {
    let mut out = String::new();
    for s in SCENARIOS {
        out.push_str(&format!("{}\n  {}\n  anchor: {}\n", s.name, s.summary, s.anchor));
        out.push_str(&format!("  sections: {}\n", s.sections.join(", ")));
        let req: Vec<String> = s.required.iter().map(|k| format!("run.{k}")).collect();
        out.push_str(&format!("  required: {}\n", req.join(", ")));
        if !s.optional.is_empty() {
            let opt: Vec<String> = s.optional.iter().map(|k| format!("run.{k}")).collect();
            out.push_str(&format!("  optional: {}\n", opt.join(", ")));
        }
    }
    out
}

pub fn render_json() -> String {
    serde_json::to_string_pretty(SCENARIOS).expect("catalog serializes")
}

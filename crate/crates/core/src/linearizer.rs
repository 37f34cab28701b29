//! State-space assembly of the classical multi-machine plant and of the
//! closed loop with droop-controlled inverter-based resources.
//!
//! State order: rotor angles, rotor speeds, then three states per hydro
//! governor (transient-droop lag, servo, water-column lag). Closing loops
//! appends controller states after the plant states.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::build_network;
use crate::scenario::{DisturbanceSpec, IbrControllerSpec, Scenario};

/// Per-unit context carried alongside the matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub f0_hz: f64,
    pub s_base_mva: f64,
    pub omega_base: f64,
    /// Bus id for each machine, in state order.
    pub buses: Vec<usize>,
    /// Inertia constants on the system base, s.
    pub h_sys: Vec<f64>,
}

impl ModelMeta {
    pub fn speed_state(&self, bus: usize) -> Option<usize> {
        let n = self.buses.len();
        self.buses.iter().position(|&b| b == bus).map(|i| n + i)
    }

    pub fn total_h(&self) -> f64 {
        self.h_sys.iter().sum()
    }
}

/// `ẋ = A x + B_u u + B_d d`, `y = C_y x`, `z = C_z x`.
///
/// `u` and `y` channels sit at `channel_buses`; `d` has one channel per
/// machine bus; `z` is the single COI speed deviation.
#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b_u: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub c_y: DMatrix<f64>,
    pub c_z: DMatrix<f64>,
    pub d_yu: DMatrix<f64>,
    pub d_yd: DMatrix<f64>,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub disturbance_labels: Vec<String>,
    pub output_labels: Vec<String>,
    pub performance_labels: Vec<String>,
    pub channel_buses: Vec<usize>,
    pub meta: ModelMeta,
}

impl StateSpaceModel {
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn channel(&self, bus: usize) -> Option<usize> {
        self.channel_buses.iter().position(|&b| b == bus)
    }

    pub fn disturbance_channel(&self, bus: usize) -> Option<usize> {
        self.meta.buses.iter().position(|&b| b == bus)
    }

    /// Disturbance vector in pu for a list of bus deficits.
    pub fn disturbance_vector(&self, ds: &[DisturbanceSpec]) -> Result<DVector<f64>> {
        let mut d = DVector::zeros(self.b_d.ncols());
        for (i, x) in ds.iter().enumerate() {
            let k = self
                .disturbance_channel(x.bus)
                .ok_or_else(|| Error::invalid(format!("disturbances[{i}].bus"), "no machine at this bus"))?;
            d[k] += x.magnitude_mw / self.meta.s_base_mva;
        }
        Ok(d)
    }

    pub fn check_dimensions(&self) -> bool {
        let n = self.n_states();
        let (nu, nd, ny, nz) = (
            self.input_labels.len(),
            self.disturbance_labels.len(),
            self.output_labels.len(),
            self.performance_labels.len(),
        );
        self.a.shape() == (n, n)
            && self.state_labels.len() == n
            && self.b_u.shape() == (n, nu)
            && self.b_d.shape() == (n, nd)
            && self.c_y.shape() == (ny, n)
            && self.c_z.shape() == (nz, n)
            && self.d_yu.shape() == (ny, nu)
            && self.d_yd.shape() == (ny, nd)
            && self.channel_buses.len() == nu
            && nu == ny
    }
}

/// Open-loop plant with `u`/`y` channels at the scenario's IBR buses.
pub fn linearize(s: &Scenario) -> Result<StateSpaceModel> {
    let buses: Vec<usize> = s.ibr.iter().map(|c| c.bus).collect();
    linearize_with_channels(s, &buses)
}

/// Open-loop plant with `u`/`y` channels at the given buses.
pub fn linearize_with_channels(s: &Scenario, channel_buses: &[usize]) -> Result<StateSpaceModel> {
    let n = s.n_buses();
    for b in 1..=n {
        if s.generator_at(b).is_none() {
            return Err(Error::invalid(
                format!("buses[{}]", b - 1),
                format!("bus {b} has no generator; every bus needs a machine state"),
            ));
        }
    }
    for (i, c) in s.ibr.iter().enumerate() {
        if s.generator_at(c.bus).is_none() {
            return Err(Error::invalid(format!("ibr[{i}].bus"), "controller bus has no generator"));
        }
    }
    for (k, &b) in channel_buses.iter().enumerate() {
        if s.bus(b).is_none() {
            return Err(Error::invalid(format!("channels[{k}]"), format!("bus {b} does not exist")));
        }
        if channel_buses[..k].contains(&b) {
            return Err(Error::invalid(format!("channels[{k}]"), format!("duplicate channel at bus {b}")));
        }
    }

    let bmat = build_network(s)?;
    let s_base = s.system.s_base_mva;
    let omega_base = s.omega_base();
    let buses: Vec<usize> = (1..=n).collect();
    let h_sys: Vec<f64> = buses.iter().map(|&b| s.inertia_system(b)).collect();

    let govs: Vec<(usize, &crate::scenario::GovernorSpec)> = buses
        .iter()
        .filter_map(|&b| s.generator_at(b).and_then(|g| g.governor.as_ref()).map(|gv| (b, gv)))
        .collect();
    let ns = 2 * n + 3 * govs.len();
    let mut a = DMatrix::<f64>::zeros(ns, ns);
    let mut labels = Vec::with_capacity(ns);
    for &b in &buses {
        labels.push(format!("delta_{b}"));
    }
    for &b in &buses {
        labels.push(format!("omega_{b}"));
    }

    for i in 0..n {
        a[(i, n + i)] = omega_base;
        let g = s.generator_at(buses[i]).expect("checked");
        let rated = s.bus(buses[i]).expect("checked").rated_power_mw;
        let d_sys = g.damping * rated / s_base;
        let m = 2.0 * h_sys[i];
        for j in 0..n {
            a[(n + i, j)] = -bmat[(i, j)] / m;
        }
        a[(n + i, n + i)] = -d_sys / m;
    }

    for (k, (bus, gv)) in govs.iter().enumerate() {
        let i = bus - 1;
        let w = n + i;
        let (x1, xg, x3) = (2 * n + 3 * k, 2 * n + 3 * k + 1, 2 * n + 3 * k + 2);
        labels.push(format!("gov{bus}_droop"));
        labels.push(format!("gov{bus}_servo"));
        labels.push(format!("gov{bus}_turbine"));
        let kg = gv.droop_gain;
        // (1 + s T_r) / (1 + s T_x) = a + (1 - a) / (1 + s T_x), T_x = T_r r_t K_g
        let tx = if kg * gv.transient_droop > 0.0 {
            gv.reset_time_s * gv.transient_droop * kg
        } else {
            gv.reset_time_s
        };
        let ratio = gv.reset_time_s / tx;
        a[(x1, x1)] = -1.0 / tx;
        a[(x1, w)] = -1.0 / tx;
        // servo: T_g ġ = -g + K_g (-a ω + (1 - a) x1)
        let tg = gv.servo_time_s;
        a[(xg, xg)] = -1.0 / tg;
        a[(xg, w)] = -kg * ratio / tg;
        a[(xg, x1)] = kg * (1.0 - ratio) / tg;
        // water column (1 - s T_w)/(1 + s T_w/2) = -2 + 3/(1 + s T_w/2)
        let tw2 = 0.5 * gv.water_time_s;
        a[(x3, x3)] = -1.0 / tw2;
        a[(x3, xg)] = 1.0 / tw2;
        let m = 2.0 * h_sys[i];
        a[(w, xg)] += -2.0 / m;
        a[(w, x3)] += 3.0 / m;
    }

    let nu = channel_buses.len();
    let mut b_u = DMatrix::<f64>::zeros(ns, nu);
    let mut c_y = DMatrix::<f64>::zeros(nu, ns);
    for (k, &b) in channel_buses.iter().enumerate() {
        let i = b - 1;
        b_u[(n + i, k)] = 1.0 / (2.0 * h_sys[i]);
        c_y[(k, n + i)] = 1.0;
    }
    let mut b_d = DMatrix::<f64>::zeros(ns, n);
    for i in 0..n {
        b_d[(n + i, i)] = -1.0 / (2.0 * h_sys[i]);
    }
    let htot: f64 = h_sys.iter().sum();
    let mut c_z = DMatrix::<f64>::zeros(1, ns);
    for i in 0..n {
        c_z[(0, n + i)] = h_sys[i] / htot;
    }

    Ok(StateSpaceModel {
        a,
        b_u,
        b_d,
        c_y,
        c_z,
        d_yu: DMatrix::zeros(nu, nu),
        d_yd: DMatrix::zeros(nu, n),
        state_labels: labels,
        input_labels: channel_buses.iter().map(|b| format!("u_ibr{b}")).collect(),
        disturbance_labels: buses.iter().map(|b| format!("d_bus{b}")).collect(),
        output_labels: channel_buses.iter().map(|b| format!("y_omega{b}")).collect(),
        performance_labels: vec!["z_coi".into()],
        channel_buses: channel_buses.to_vec(),
        meta: ModelMeta {
            f0_hz: s.system.f0_hz,
            s_base_mva: s_base,
            omega_base,
            buses,
            h_sys,
        },
    })
}

/// Which plant channel a controller closed and where its states live.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerChannel {
    pub channel: usize,
    pub spec: IbrControllerSpec,
    pub filter_state: usize,
    pub lag_state: Option<usize>,
}

impl ControllerChannel {
    /// State holding the injected power `u`.
    pub fn output_state(&self) -> usize {
        self.lag_state.unwrap_or(self.filter_state)
    }
}

/// Plant with droop loops absorbed. `b_u` and `c_y` are kept (zero-padded)
/// so that the closed loop can serve as the plant for further loops.
#[derive(Debug, Clone)]
pub struct ClosedLoopModel {
    pub a_cl: DMatrix<f64>,
    pub b_u: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub c_y: DMatrix<f64>,
    pub c_z: DMatrix<f64>,
    pub plant_states: usize,
    pub state_labels: Vec<String>,
    pub controllers: Vec<ControllerChannel>,
    pub plant: StateSpaceModel,
}

impl ClosedLoopModel {
    pub fn n_states(&self) -> usize {
        self.a_cl.nrows()
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.plant.meta
    }

    pub fn controller_at(&self, bus: usize) -> Option<&ControllerChannel> {
        self.controllers.iter().find(|c| c.spec.bus == bus)
    }

    /// The closed loop viewed as a plant with the original channels.
    pub fn as_plant(&self) -> StateSpaceModel {
        let p = &self.plant;
        StateSpaceModel {
            a: self.a_cl.clone(),
            b_u: self.b_u.clone(),
            b_d: self.b_d.clone(),
            c_y: self.c_y.clone(),
            c_z: self.c_z.clone(),
            d_yu: p.d_yu.clone(),
            d_yd: p.d_yd.clone(),
            state_labels: self.state_labels.clone(),
            input_labels: p.input_labels.clone(),
            disturbance_labels: p.disturbance_labels.clone(),
            output_labels: p.output_labels.clone(),
            performance_labels: p.performance_labels.clone(),
            channel_buses: p.channel_buses.clone(),
            meta: p.meta.clone(),
        }
    }
}

/// Closes `u = -K/((1 + s T_f)(1 + s T_a)) y` for each controller. Each adds
/// a filter state `T_f ṗ = -p - K y`, plus `T_a q̇ = -q + p` when `T_a > 0`;
/// the last of these is injected.
pub fn close_loop(m: &StateSpaceModel, controllers: &[IbrControllerSpec]) -> Result<ClosedLoopModel> {
    let n = m.n_states();
    let mut chans = Vec::with_capacity(controllers.len());
    for (i, c) in controllers.iter().enumerate() {
        if controllers[..i].iter().any(|o| o.bus == c.bus) {
            return Err(Error::invalid(format!("ibr[{i}].bus"), format!("duplicate controller at bus {}", c.bus)));
        }
        let ch = m
            .channel(c.bus)
            .ok_or_else(|| Error::invalid(format!("ibr[{i}].bus"), format!("plant has no channel at bus {}", c.bus)))?;
        if !(c.filter_time_s > 0.0) || !(c.response_time_s >= 0.0) || !(c.droop_gain >= 0.0) {
            return Err(Error::invalid(format!("ibr[{i}]"), "time constants and gain out of range"));
        }
        chans.push(ch);
    }
    let extra: usize = controllers.iter().map(|c| if c.response_time_s > 0.0 { 2 } else { 1 }).sum();
    let nt = n + extra;
    let mut a = DMatrix::<f64>::zeros(nt, nt);
    a.view_mut((0, 0), (n, n)).copy_from(&m.a);
    let mut labels = m.state_labels.clone();
    let mut map = Vec::with_capacity(controllers.len());
    let mut next = n;
    for (c, &ch) in controllers.iter().zip(&chans) {
        let p = next;
        next += 1;
        labels.push(format!("ibr{}_filter", c.bus));
        for j in 0..n {
            a[(p, j)] = -c.droop_gain * m.c_y[(ch, j)] / c.filter_time_s;
        }
        a[(p, p)] = -1.0 / c.filter_time_s;
        let lag = if c.response_time_s > 0.0 {
            let q = next;
            next += 1;
            labels.push(format!("ibr{}_lag", c.bus));
            a[(q, p)] = 1.0 / c.response_time_s;
            a[(q, q)] = -1.0 / c.response_time_s;
            Some(q)
        } else {
            None
        };
        let out = lag.unwrap_or(p);
        for i in 0..n {
            a[(i, out)] += m.b_u[(i, ch)];
        }
        map.push(ControllerChannel {
            channel: ch,
            spec: c.clone(),
            filter_state: p,
            lag_state: lag,
        });
    }
    let pad_rows = |x: &DMatrix<f64>| {
        let mut y = DMatrix::zeros(nt, x.ncols());
        y.view_mut((0, 0), (n, x.ncols())).copy_from(x);
        y
    };
    let pad_cols = |x: &DMatrix<f64>| {
        let mut y = DMatrix::zeros(x.nrows(), nt);
        y.view_mut((0, 0), (x.nrows(), n)).copy_from(x);
        y
    };
    Ok(ClosedLoopModel {
        a_cl: a,
        b_u: pad_rows(&m.b_u),
        b_d: pad_rows(&m.b_d),
        c_y: pad_cols(&m.c_y),
        c_z: pad_cols(&m.c_z),
        plant_states: n,
        state_labels: labels,
        controllers: map,
        plant: m.clone(),
    })
}

/// Plant with every controller of the scenario closed.
pub fn closed_loop_of(s: &Scenario) -> Result<ClosedLoopModel> {
    close_loop(&linearize(s)?, &s.ibr)
}

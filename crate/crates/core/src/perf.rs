//! Analytical throughput, power, area and energy model of one core.
//!
//! Memory and logic numbers are configuration inputs; nothing here models
//! circuits. A synaptic operation is counted per synapse read, so a core
//! reading one 256-synapse word line per clock performs `clock x 256` ops/s.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

/// Cross-technology area-efficiency ratio band claimed for b = 5..8.
pub const RATIO_BOUNDS: (f64, f64) = (3.0, 4.1);

const DEFAULT_CONFIG: &str = include_str!("../config/perf_default.toml");

/// STT-RAM array parameters. Carried as provenance only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechParams {
    pub cell_area_f2: f64,
    pub r_on_ohm: f64,
    pub r_off_ohm: f64,
    pub read_voltage_mv: f64,
    pub read_pulse_ns: f64,
    pub program_current_ua: f64,
    pub write_pulse_ns: f64,
    pub feature_nm: f64,
}

impl TechParams {
    pub fn stt_ram() -> Self {
        TechParams {
            cell_area_f2: 24.0,
            r_on_ohm: 2500.0,
            r_off_ohm: 5000.0,
            read_voltage_mv: 80.0,
            read_pulse_ns: 5.0,
            program_current_ua: 150.0,
            write_pulse_ns: 10.0,
            feature_nm: 70.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.cell_area_f2,
            self.r_on_ohm,
            self.r_off_ohm,
            self.read_voltage_mv,
            self.read_pulse_ns,
            self.program_current_ua,
            self.write_pulse_ns,
            self.feature_nm,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("technology parameters must be positive".into()));
        }
        if self.r_off_ohm <= self.r_on_ohm {
            return Err(Error::Config("R_off must exceed R_on".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Technology {
    #[serde(rename = "sram")]
    Sram,
    #[serde(rename = "stt-ram")]
    SttRam,
}

impl Technology {
    pub fn label(self) -> &'static str {
        match self {
            Technology::Sram => "SRAM",
            Technology::SttRam => "STT-RAM",
        }
    }
}

/// Where a configured number came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Published,
    /// Linearly scaled in synapse width from a published entry.
    Scaled,
    /// Back-solved from published efficiency figures.
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryStats {
    pub technology: Technology,
    pub bits: u32,
    pub read_energy_pj: f64,
    pub read_latency_ns: Option<f64>,
    pub clock_mhz: f64,
    pub area_mm2: f64,
    pub power_mw: f64,
    pub source: Source,
}

impl MemoryStats {
    pub fn stt_ram_published() -> Self {
        MemoryStats {
            technology: Technology::SttRam,
            bits: 8,
            read_energy_pj: 535.0,
            read_latency_ns: Some(7.34),
            clock_mhz: 100.0,
            area_mm2: 1.14,
            power_mw: 53.5,
            source: Source::Published,
        }
    }

    /// Energy, area and power scale with the number of cells per synapse.
    pub fn scaled_to(&self, bits: u32) -> Self {
        if bits == self.bits {
            return self.clone();
        }
        let f = f64::from(bits) / f64::from(self.bits);
        MemoryStats {
            technology: self.technology,
            bits,
            read_energy_pj: self.read_energy_pj * f,
            read_latency_ns: self.read_latency_ns,
            clock_mhz: self.clock_mhz,
            area_mm2: self.area_mm2 * f,
            power_mw: self.power_mw * f,
            source: Source::Scaled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicStats {
    pub bits: u32,
    pub power_mw: f64,
    pub area_mm2: f64,
    pub calibrated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overheads {
    pub routing: f64,
    pub controller: f64,
    /// Whether the overheads scale area as well as power.
    pub apply_to_area: bool,
}

impl Default for Overheads {
    fn default() -> Self {
        Overheads {
            routing: 0.10,
            controller: 0.20,
            apply_to_area: false,
        }
    }
}

impl Overheads {
    pub fn none() -> Self {
        Overheads {
            routing: 0.0,
            controller: 0.0,
            apply_to_area: false,
        }
    }

    pub fn power_factor(&self) -> f64 {
        1.0 + self.routing + self.controller
    }

    pub fn area_factor(&self) -> f64 {
        if self.apply_to_area {
            self.power_factor()
        } else {
            1.0
        }
    }
}

/// One published efficiency row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub bits: u32,
    pub sram_gsops_per_w: f64,
    pub stt_gsops_per_w: f64,
    pub sram_gsops_per_w_mm2: f64,
    pub stt_gsops_per_w_mm2: f64,
}

impl ReferenceRow {
    pub fn get(&self, tech: Technology) -> (f64, f64) {
        match tech {
            Technology::Sram => (self.sram_gsops_per_w, self.sram_gsops_per_w_mm2),
            Technology::SttRam => (self.stt_gsops_per_w, self.stt_gsops_per_w_mm2),
        }
    }
}

pub fn published_reference() -> Vec<ReferenceRow> {
    [
        (5, 353.0, 474.0, 177.0, 559.0),
        (6, 283.0, 412.0, 119.0, 415.0),
        (7, 230.0, 366.0, 83.0, 322.0),
        (8, 193.0, 311.0, 61.0, 239.0),
    ]
    .into_iter()
    .map(|(bits, sw, tw, sa, ta)| ReferenceRow {
        bits,
        sram_gsops_per_w: sw,
        stt_gsops_per_w: tw,
        sram_gsops_per_w_mm2: sa,
        stt_gsops_per_w_mm2: ta,
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfConfig {
    pub version: u32,
    pub synapses_per_wordline: u32,
    pub avg_active_wordlines: f64,
    pub tech: TechParams,
    pub overheads: Overheads,
    pub memory: Vec<MemoryStats>,
    pub logic: Vec<LogicStats>,
    #[serde(default)]
    pub reference: Vec<ReferenceRow>,
}

impl PerfConfig {
    /// Published STT-RAM numbers plus logic and SRAM entries back-solved from
    /// the published efficiency table.
    pub fn published() -> Result<Self> {
        let overheads = Overheads::default();
        let reference = published_reference();
        let cal = calibrate(&reference, &MemoryStats::stt_ram_published(), 250.0, 256, &overheads)?;
        Ok(PerfConfig {
            version: CONFIG_VERSION,
            synapses_per_wordline: 256,
            avg_active_wordlines: 365.0,
            tech: TechParams::stt_ram(),
            overheads,
            memory: cal.memory,
            logic: cal.logic,
            reference,
        })
    }

    /// The configuration shipped with the crate.
    pub fn builtin() -> Result<Self> {
        Self::from_toml(DEFAULT_CONFIG)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PerfConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("perf config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("perf config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Version {
                found: self.version,
                expected: CONFIG_VERSION,
            });
        }
        self.tech.validate()?;
        if self.synapses_per_wordline == 0 || self.avg_active_wordlines.is_nan() || self.avg_active_wordlines < 0.0 {
            return Err(Error::Config("synapses per word line must be positive".into()));
        }
        if !(self.overheads.routing >= 0.0 && self.overheads.controller >= 0.0) {
            return Err(Error::Config("overheads must be non-negative".into()));
        }
        for m in &self.memory {
            let vals = [m.read_energy_pj, m.clock_mhz, m.area_mm2, m.power_mw];
            if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Config(format!(
                    "{} {}-bit memory stats must be positive",
                    m.technology.label(),
                    m.bits
                )));
            }
        }
        for l in &self.logic {
            if !(l.power_mw > 0.0 && l.area_mm2 > 0.0) {
                return Err(Error::Config(format!("{}-bit logic stats must be positive", l.bits)));
            }
        }
        Ok(())
    }

    pub fn memory_for(&self, tech: Technology, bits: u32) -> Option<&MemoryStats> {
        self.memory.iter().find(|m| m.technology == tech && m.bits == bits)
    }

    pub fn logic_for(&self, bits: u32) -> Option<&LogicStats> {
        self.logic.iter().find(|l| l.bits == bits)
    }

    /// Precisions with logic and both memory technologies configured.
    pub fn precisions(&self) -> Vec<u32> {
        let mut bits: Vec<u32> = self
            .logic
            .iter()
            .map(|l| l.bits)
            .filter(|&b| {
                self.memory_for(Technology::Sram, b).is_some()
                    && self.memory_for(Technology::SttRam, b).is_some()
            })
            .collect();
        bits.sort_unstable();
        bits.dedup();
        bits
    }
}

/// Billions of synaptic operations per second.
pub fn gsops(clock_mhz: f64, synapses_per_wordline: u32) -> f64 {
    clock_mhz * f64::from(synapses_per_wordline) / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rollup {
    pub power_mw: f64,
    pub area_mm2: f64,
}

pub fn rollup(mem: &MemoryStats, logic: &LogicStats, overheads: &Overheads) -> Result<Rollup> {
    let inputs = [mem.power_mw, mem.area_mm2, logic.power_mw, logic.area_mm2];
    if inputs.iter().any(|v| v.is_nan() || *v < 0.0) || overheads.routing < 0.0 || overheads.controller < 0.0 {
        return Err(Error::OutOfRange("rollup inputs must be non-negative".into()));
    }
    Ok(Rollup {
        power_mw: (mem.power_mw + logic.power_mw) * overheads.power_factor(),
        area_mm2: (mem.area_mm2 + logic.area_mm2) * overheads.area_factor(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Efficiency {
    pub gsops_per_w: f64,
    pub gsops_per_w_mm2: f64,
}

pub fn efficiency(gsops: f64, total: &Rollup) -> Result<Efficiency> {
    if !(total.power_mw > 0.0 && total.area_mm2 > 0.0) {
        return Err(Error::Numeric("efficiency needs positive power and area".into()));
    }
    let gsops_per_w = gsops / (total.power_mw / 1000.0);
    Ok(Efficiency {
        gsops_per_w,
        gsops_per_w_mm2: gsops_per_w / total.area_mm2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyPerStep {
    pub memory_nj: f64,
    pub logic_nj: f64,
    pub total_nj: f64,
}

/// Logic energy while `lines` word lines are read, one per clock.
pub fn logic_energy_nj(logic_power_mw: f64, lines: f64, clock_mhz: f64) -> f64 {
    // mW * us = nJ
    logic_power_mw * lines / clock_mhz
}

pub fn energy_per_step(avg_active_wordlines: f64, mem: &MemoryStats, logic_nj: f64) -> EnergyPerStep {
    let memory_nj = avg_active_wordlines * mem.read_energy_pj / 1000.0;
    EnergyPerStep {
        memory_nj,
        logic_nj,
        total_nj: memory_nj + logic_nj,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub memory: Vec<MemoryStats>,
    pub logic: Vec<LogicStats>,
}

/// Back-solves logic stats from the STT-RAM column (memory scaled from the
/// published entry) and then SRAM memory stats from the SRAM column.
pub fn calibrate(
    reference: &[ReferenceRow],
    stt: &MemoryStats,
    sram_clock_mhz: f64,
    synapses_per_wordline: u32,
    overheads: &Overheads,
) -> Result<Calibration> {
    let pf = overheads.power_factor();
    let af = overheads.area_factor();
    let totals = |clock: f64, eff_w: f64, eff_wmm2: f64| {
        let power_mw = gsops(clock, synapses_per_wordline) / eff_w * 1000.0;
        (power_mw / pf, eff_w / eff_wmm2 / af)
    };
    let mut memory = Vec::new();
    let mut logic = Vec::new();
    for row in reference {
        let stt_b = stt.scaled_to(row.bits);
        let (core_p, core_a) = totals(stt_b.clock_mhz, row.stt_gsops_per_w, row.stt_gsops_per_w_mm2);
        let l = LogicStats {
            bits: row.bits,
            power_mw: core_p - stt_b.power_mw,
            area_mm2: core_a - stt_b.area_mm2,
            calibrated: true,
        };
        if !(l.power_mw > 0.0 && l.area_mm2 > 0.0) {
            return Err(Error::Numeric(format!(
                "{}-bit logic back-solves to {:.4} mW, {:.4} mm^2",
                row.bits, l.power_mw, l.area_mm2
            )));
        }
        let (core_p, core_a) = totals(sram_clock_mhz, row.sram_gsops_per_w, row.sram_gsops_per_w_mm2);
        let sram_power = core_p - l.power_mw;
        let sram = MemoryStats {
            technology: Technology::Sram,
            bits: row.bits,
            read_energy_pj: sram_power / sram_clock_mhz * 1000.0,
            read_latency_ns: None,
            clock_mhz: sram_clock_mhz,
            area_mm2: core_a - l.area_mm2,
            power_mw: sram_power,
            source: Source::Calibrated,
        };
        if !(sram.power_mw > 0.0 && sram.area_mm2 > 0.0) {
            return Err(Error::Numeric(format!("{}-bit SRAM back-solve is not positive", row.bits)));
        }
        memory.push(stt_b);
        memory.push(sram);
        logic.push(l);
    }
    Ok(Calibration { memory, logic })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TechMetrics {
    pub technology: Technology,
    pub gsops: f64,
    pub power_mw: f64,
    pub area_mm2: f64,
    pub gsops_per_w: f64,
    pub gsops_per_w_mm2: f64,
    pub energy_per_step: EnergyPerStep,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecisionRow {
    pub bits: u32,
    pub sram: TechMetrics,
    pub stt_ram: TechMetrics,
    /// STT-RAM over SRAM, GSOPS/W/mm^2.
    pub area_efficiency_ratio: f64,
    /// STT-RAM over SRAM, GSOPS/W.
    pub power_efficiency_ratio: f64,
    /// SRAM over STT-RAM memory-array power and area.
    pub memory_power_ratio: f64,
    pub memory_area_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellDeviation {
    pub bits: u32,
    pub technology: Technology,
    pub metric: &'static str,
    pub reference: f64,
    pub model: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfReport {
    pub synapses_per_wordline: u32,
    pub avg_active_wordlines: f64,
    pub overheads: Overheads,
    pub rows: Vec<PrecisionRow>,
    pub deviations: Vec<CellDeviation>,
    pub max_relative_deviation: Option<f64>,
    pub ratio_bounds: (f64, f64),
    pub ratios_within_bounds: bool,
}

fn tech_metrics(cfg: &PerfConfig, tech: Technology, bits: u32) -> Result<TechMetrics> {
    let mem = cfg
        .memory_for(tech, bits)
        .ok_or_else(|| Error::Config(format!("no {} {bits}-bit memory entry", tech.label())))?;
    let logic = cfg
        .logic_for(bits)
        .ok_or_else(|| Error::Config(format!("no {bits}-bit logic entry")))?;
    let g = gsops(mem.clock_mhz, cfg.synapses_per_wordline);
    let total = rollup(mem, logic, &cfg.overheads)?;
    let eff = efficiency(g, &total)?;
    let lines = cfg.avg_active_wordlines;
    Ok(TechMetrics {
        technology: tech,
        gsops: g,
        power_mw: total.power_mw,
        area_mm2: total.area_mm2,
        gsops_per_w: eff.gsops_per_w,
        gsops_per_w_mm2: eff.gsops_per_w_mm2,
        energy_per_step: energy_per_step(lines, mem, logic_energy_nj(logic.power_mw, lines, mem.clock_mhz)),
    })
}

pub fn report(cfg: &PerfConfig) -> Result<PerfReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for bits in cfg.precisions() {
        let sram = tech_metrics(cfg, Technology::Sram, bits)?;
        let stt_ram = tech_metrics(cfg, Technology::SttRam, bits)?;
        let sm = cfg.memory_for(Technology::Sram, bits).expect("checked");
        let tm = cfg.memory_for(Technology::SttRam, bits).expect("checked");
        rows.push(PrecisionRow {
            bits,
            area_efficiency_ratio: stt_ram.gsops_per_w_mm2 / sram.gsops_per_w_mm2,
            power_efficiency_ratio: stt_ram.gsops_per_w / sram.gsops_per_w,
            memory_power_ratio: sm.power_mw / tm.power_mw,
            memory_area_ratio: sm.area_mm2 / tm.area_mm2,
            sram,
            stt_ram,
        });
    }
    if rows.is_empty() {
        return Err(Error::Config("no precision has logic and both memory entries".into()));
    }
    let mut deviations = Vec::new();
    for r in &cfg.reference {
        let Some(row) = rows.iter().find(|row| row.bits == r.bits) else {
            continue;
        };
        for m in [&row.sram, &row.stt_ram] {
            let (w, wmm2) = r.get(m.technology);
            for (metric, reference, model) in
                [("GSOPS/W", w, m.gsops_per_w), ("GSOPS/W/mm^2", wmm2, m.gsops_per_w_mm2)]
            {
                deviations.push(CellDeviation {
                    bits: r.bits,
                    technology: m.technology,
                    metric,
                    reference,
                    model,
                    relative: (model - reference) / reference,
                });
            }
        }
    }
    let max_relative_deviation = deviations
        .iter()
        .map(|d| d.relative.abs())
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let ratios_within_bounds = rows
        .iter()
        .all(|r| (RATIO_BOUNDS.0..=RATIO_BOUNDS.1).contains(&r.area_efficiency_ratio));
    Ok(PerfReport {
        synapses_per_wordline: cfg.synapses_per_wordline,
        avg_active_wordlines: cfg.avg_active_wordlines,
        overheads: cfg.overheads,
        rows,
        deviations,
        max_relative_deviation,
        ratio_bounds: RATIO_BOUNDS,
        ratios_within_bounds,
    })
}

impl PerfReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn row(&self, bits: u32) -> Option<&PrecisionRow> {
        self.rows.iter().find(|r| r.bits == bits)
    }

    pub fn text_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>9} | {:>17} | {:>17}", "Precision", "GSOPS/W", "GSOPS/W/mm^2");
        let _ = writeln!(s, "{:>9} | {:>8} {:>8} | {:>8} {:>8}", "", "SRAM", "STT-RAM", "SRAM", "STT-RAM");
        let _ = writeln!(s, "{}", "-".repeat(51));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>9} | {:>8.1} {:>8.1} | {:>8.1} {:>8.1}",
                r.bits, r.sram.gsops_per_w, r.stt_ram.gsops_per_w, r.sram.gsops_per_w_mm2, r.stt_ram.gsops_per_w_mm2
            );
        }
        let _ = writeln!(s);
        if let Some(r) = self.rows.first() {
            let _ = writeln!(s, "GSOPS: SRAM {} / STT-RAM {}", r.sram.gsops, r.stt_ram.gsops);
        }
        let _ = writeln!(
            s,
            "Energy per step at {} active word lines (STT-RAM):",
            self.avg_active_wordlines
        );
        for r in &self.rows {
            let e = r.stt_ram.energy_per_step;
            let _ = writeln!(
                s,
                "  b={}: memory {:.3} nJ + logic {:.3} nJ = {:.3} nJ",
                r.bits, e.memory_nj, e.logic_nj, e.total_nj
            );
        }
        let _ = writeln!(s, "Area-efficiency ratio STT-RAM/SRAM:");
        for r in &self.rows {
            let ok = (self.ratio_bounds.0..=self.ratio_bounds.1).contains(&r.area_efficiency_ratio);
            let _ = writeln!(
                s,
                "  b={}: {:.2}x ({} [{}, {}])",
                r.bits,
                r.area_efficiency_ratio,
                if ok { "within" } else { "outside" },
                self.ratio_bounds.0,
                self.ratio_bounds.1
            );
        }
        if let Some(d) = self.max_relative_deviation {
            let _ = writeln!(s, "Max deviation from reference table: {:.2}%", d * 100.0);
        }
        s
    }
}

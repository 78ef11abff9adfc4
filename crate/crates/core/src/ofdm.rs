//! OFDM grid generation, radar echo synthesis and communication reception.
//!
//! The grid-domain model works directly on the M x L matrix of subcarrier by
//! symbol samples; cyclic-prefix insertion and sample-level time series are
//! never materialized. A radar echo is the transmit grid Hadamard-multiplied
//! by a delay phase ramp along subcarriers and a Doppler phase ramp along
//! symbols, scaled per receive antenna by the element response, and buried in
//! circular Gaussian noise. The communication link reduces to a scalar
//! effective channel through the beamformer/combiner inner products.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::array::{array_gain_factor, AnglePair, ArrayGeometry, SteeringVector};
use crate::{Result, SimError};

/// OFDM waveform parameters for one processing block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfdmConfig {
    /// Subcarriers per symbol (M).
    pub m_subcarriers: usize,
    /// Symbols per block (L).
    pub l_symbols: usize,
    /// Subcarrier spacing in Hz.
    pub subcarrier_spacing: f64,
    /// Cyclic prefix duration in seconds.
    pub cp_duration: f64,
    /// Carrier frequency in Hz.
    pub carrier_frequency: f64,
    /// Transmit power in W.
    pub tx_power: f64,
}

impl OfdmConfig {
    pub fn new(
        m_subcarriers: usize,
        l_symbols: usize,
        subcarrier_spacing: f64,
        cp_duration: f64,
        carrier_frequency: f64,
        tx_power: f64,
    ) -> Result<Self> {
        if m_subcarriers == 0 || l_symbols == 0 {
            return Err(SimError::InvalidParam("grid dimensions must be positive".into()));
        }
        if subcarrier_spacing <= 0.0 || cp_duration < 0.0 || carrier_frequency <= 0.0 {
            return Err(SimError::InvalidParam("non-positive waveform parameter".into()));
        }
        if tx_power <= 0.0 {
            return Err(SimError::InvalidParam("tx_power must be positive".into()));
        }
        Ok(Self {
            m_subcarriers,
            l_symbols,
            subcarrier_spacing,
            cp_duration,
            carrier_frequency,
            tx_power,
        })
    }

    /// Block sized from an NR numerology: the CP is whatever extends the
    /// elementary symbol `1/df` to the numerology's average symbol duration.
    pub fn from_numerology(
        mu: u8,
        m_subcarriers: usize,
        l_symbols: usize,
        carrier_frequency: f64,
        tx_power: f64,
    ) -> Result<Self> {
        let n = crate::nr::numerology_params(mu)?;
        let cp = n.avg_symbol_duration - 1.0 / n.subcarrier_spacing;
        Self::new(
            m_subcarriers,
            l_symbols,
            n.subcarrier_spacing,
            cp,
            carrier_frequency,
            tx_power,
        )
    }

    /// Full OFDM symbol duration `T_s = T_cp + 1/df`.
    pub fn symbol_duration(&self) -> f64 {
        self.cp_duration + 1.0 / self.subcarrier_spacing
    }

    /// Width of one delay-domain range bin in meters.
    pub fn range_bin_width(&self) -> f64 {
        crate::SPEED_OF_LIGHT / (2.0 * self.m_subcarriers as f64 * self.subcarrier_spacing)
    }

    /// Width of one Doppler-domain velocity bin in meters per second.
    pub fn velocity_bin_width(&self) -> f64 {
        crate::SPEED_OF_LIGHT
            / (2.0 * self.carrier_frequency * self.l_symbols as f64 * self.symbol_duration())
    }
}

/// M x L complex transmit or receive grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmGrid {
    samples: DMatrix<Complex64>,
}

impl OfdmGrid {
    pub fn from_matrix(samples: DMatrix<Complex64>) -> Self {
        Self { samples }
    }

    pub fn samples(&self) -> &DMatrix<Complex64> {
        &self.samples
    }

    pub fn subcarriers(&self) -> usize {
        self.samples.nrows()
    }

    pub fn symbols(&self) -> usize {
        self.samples.ncols()
    }

    /// Mean per-entry power; 1.0 for a unit-power constellation grid.
    pub fn average_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

/// One propagation path of the echo or communication channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    /// Two-way delay in seconds.
    pub delay: f64,
    /// Doppler shift in Hz.
    pub doppler: f64,
    /// Complex path gain (reflection or path-loss coefficient).
    pub gain: Complex64,
    pub angles: AnglePair,
    pub is_los: bool,
}

/// LoS plus scatterer paths making up one channel realization.
#[derive(Debug, Clone, Default)]
pub struct PathSet {
    paths: Vec<PathParams>,
}

impl PathSet {
    pub fn new(paths: Vec<PathParams>) -> Self {
        Self { paths }
    }

    pub fn paths(&self) -> &[PathParams] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn los(&self) -> Option<&PathParams> {
        self.paths.iter().find(|p| p.is_los)
    }

    /// Strongest non-LoS path by gain magnitude.
    pub fn strongest_nlos(&self) -> Option<&PathParams> {
        self.paths
            .iter()
            .filter(|p| !p.is_los)
            .max_by(|a, b| a.gain.norm().total_cmp(&b.gain.norm()))
    }
}

impl From<Vec<PathParams>> for PathSet {
    fn from(paths: Vec<PathParams>) -> Self {
        Self::new(paths)
    }
}

/// Per-receive-antenna stack of M x L grids.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoCube {
    antennas: Vec<DMatrix<Complex64>>,
}

impl EchoCube {
    pub fn from_antennas(antennas: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let first = antennas
            .first()
            .ok_or_else(|| SimError::InputShape("empty antenna stack".into()))?;
        let shape = first.shape();
        if antennas.iter().any(|a| a.shape() != shape) {
            return Err(SimError::InputShape("antenna grids differ in shape".into()));
        }
        Ok(Self { antennas })
    }

    /// Keep only the first `n` antennas (a sub-array view for cheaper maps).
    pub fn select_antennas(&self, n: usize) -> Self {
        Self {
            antennas: self.antennas[..n.min(self.antennas.len())].to_vec(),
        }
    }

    /// Keep every `stride`-th subcarrier row of each antenna grid.
    pub fn decimate_subcarriers(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        let antennas = self
            .antennas
            .iter()
            .map(|a| {
                let rows: Vec<usize> = (0..a.nrows()).step_by(stride).collect();
                DMatrix::from_fn(rows.len(), a.ncols(), |r, c| a[(rows[r], c)])
            })
            .collect();
        Self { antennas }
    }

    pub fn antennas(&self) -> &[DMatrix<Complex64>] {
        &self.antennas
    }

    pub fn antenna(&self, i: usize) -> &DMatrix<Complex64> {
        &self.antennas[i]
    }

    pub fn n_antennas(&self) -> usize {
        self.antennas.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.antennas[0].nrows()
    }

    pub fn symbols(&self) -> usize {
        self.antennas[0].ncols()
    }
}

// ── Gray-mapped square QAM ──────────────────────────────────────────────

/// Per-axis normalization so the constellation has unit average power.
fn qam_norm(bits_per_symbol: usize) -> f64 {
    let m = 1usize << bits_per_symbol;
    (2.0 * (m as f64 - 1.0) / 3.0).sqrt()
}

fn check_bits_per_symbol(bits_per_symbol: usize) -> Result<()> {
    match bits_per_symbol {
        2 | 4 | 6 => Ok(()),
        other => Err(SimError::InvalidParam(format!(
            "bits_per_symbol must be 2, 4 or 6, got {other}"
        ))),
    }
}

/// Gray word (MSB first) to amplitude level; all-zero bits map to the most
/// positive level so `00` on QPSK lands on the `(1+j)/sqrt(2)` corner.
fn axis_level(bits: &[u8]) -> f64 {
    let q = bits.len();
    let mut k = 0usize;
    let mut acc = 0u8;
    for &b in bits {
        acc ^= b & 1;
        k = (k << 1) | acc as usize;
    }
    ((1usize << q) - 1) as f64 - 2.0 * k as f64
}

/// Nearest-level decision back to the Gray word.
fn axis_bits(value: f64, q: usize, out: &mut Vec<u8>) {
    let max_level = ((1usize << q) - 1) as f64;
    let k = (((max_level - value) / 2.0).round()).clamp(0.0, max_level) as usize;
    let gray = k ^ (k >> 1);
    for i in (0..q).rev() {
        out.push(((gray >> i) & 1) as u8);
    }
}

/// Map `bits_per_symbol` bits onto one unit-average-power QAM symbol.
pub fn qam_modulate(bits: &[u8], bits_per_symbol: usize) -> Result<Complex64> {
    check_bits_per_symbol(bits_per_symbol)?;
    if bits.len() != bits_per_symbol {
        return Err(SimError::InputShape(format!(
            "expected {bits_per_symbol} bits, got {}",
            bits.len()
        )));
    }
    let q = bits_per_symbol / 2;
    let re = axis_level(&bits[..q]);
    let im = axis_level(&bits[q..]);
    Ok(Complex64::new(re, im) / qam_norm(bits_per_symbol))
}

/// Hard-decision demapping of one symbol.
pub fn qam_demodulate(symbol: Complex64, bits_per_symbol: usize, out: &mut Vec<u8>) {
    let q = bits_per_symbol / 2;
    let scaled = symbol * qam_norm(bits_per_symbol);
    axis_bits(scaled.re, q, out);
    axis_bits(scaled.im, q, out);
}

/// Fill an M x L grid with Gray-mapped QAM payload.
pub fn modulate_grid(bits: &[u8], cfg: &OfdmConfig, bits_per_symbol: usize) -> Result<OfdmGrid> {
    check_bits_per_symbol(bits_per_symbol)?;
    let need = cfg.m_subcarriers * cfg.l_symbols * bits_per_symbol;
    if bits.len() != need {
        return Err(SimError::InputShape(format!(
            "bit stream length {} does not fill an {}x{} grid at {} bits/symbol (need {})",
            bits.len(),
            cfg.m_subcarriers,
            cfg.l_symbols,
            bits_per_symbol,
            need
        )));
    }
    // Column-major fill: symbol after symbol, subcarrier by subcarrier.
    let mut samples = DMatrix::zeros(cfg.m_subcarriers, cfg.l_symbols);
    let mut chunk = bits.chunks_exact(bits_per_symbol);
    for l in 0..cfg.l_symbols {
        for m in 0..cfg.m_subcarriers {
            samples[(m, l)] = qam_modulate(chunk.next().expect("length checked"), bits_per_symbol)?;
        }
    }
    Ok(OfdmGrid { samples })
}

/// Hard-decision demapping of a whole grid, inverse of [`modulate_grid`].
pub fn demodulate_grid(grid: &OfdmGrid, bits_per_symbol: usize) -> Result<Vec<u8>> {
    check_bits_per_symbol(bits_per_symbol)?;
    let mut bits = Vec::with_capacity(grid.samples.len() * bits_per_symbol);
    for l in 0..grid.symbols() {
        for m in 0..grid.subcarriers() {
            qam_demodulate(grid.samples[(m, l)], bits_per_symbol, &mut bits);
        }
    }
    Ok(bits)
}

// ── Noise ───────────────────────────────────────────────────────────────

/// One circularly-symmetric complex Gaussian draw with the given variance.
pub fn complex_awgn(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Thermal noise power in dBm over the given bandwidth (-174 dBm/Hz density).
pub fn thermal_noise_floor_dbm(bandwidth_hz: f64) -> f64 {
    -174.0 + 10.0 * bandwidth_hz.log10()
}

// ── Radar echo synthesis and channel extraction ─────────────────────────

/// Synthesize the per-antenna radar echo of `grid` through `paths`.
///
/// For antenna `i` the echo is
/// `R_i = sum_k alpha_k (S .* eta(tau_k) omega^H(mu_k)) + Z_i` with
/// `alpha_k = zeta * sqrt(p) * beta_k * b(theta_k)[i] * a(theta_k)^T f`.
/// The delay ramp runs along subcarriers as `exp(-j*2*pi*df*m*tau)` and the
/// Doppler ramp along symbols as `exp(+j*2*pi*mu*l*Ts)`. With `include_ici`
/// each subcarrier additionally picks up the fast-time Doppler phase
/// `exp(+j*2*pi*mu*m*Ts/M)`; the term stays close to identity whenever
/// `mu*Ts << 1` and is off by default in the callers.
///
/// Noise is i.i.d. circular Gaussian with per-entry variance `noise_var`,
/// reproducible from `rng_seed`.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_echo(
    grid: &OfdmGrid,
    paths: &PathSet,
    f: &SteeringVector,
    tx_geom: &ArrayGeometry,
    rx_geom: &ArrayGeometry,
    cfg: &OfdmConfig,
    noise_var: f64,
    include_ici: bool,
    rng_seed: u64,
) -> Result<EchoCube> {
    let (m_sc, l_sym) = (cfg.m_subcarriers, cfg.l_symbols);
    if grid.subcarriers() != m_sc || grid.symbols() != l_sym {
        return Err(SimError::InputShape(format!(
            "grid is {}x{}, config says {}x{}",
            grid.subcarriers(),
            grid.symbols(),
            m_sc,
            l_sym
        )));
    }
    if f.len() != tx_geom.len() {
        return Err(SimError::InputShape(format!(
            "beamformer length {} does not match transmit array {}",
            f.len(),
            tx_geom.len()
        )));
    }
    if noise_var < 0.0 {
        return Err(SimError::InvalidParam("noise_var must be nonnegative".into()));
    }

    let zeta = array_gain_factor(tx_geom.len(), rx_geom.len());
    let amp = zeta * cfg.tx_power.sqrt();
    let t_sym = cfg.symbol_duration();

    // Per-path phase-modulated copy of the transmit grid, shared by antennas.
    let mut patterns: Vec<DMatrix<Complex64>> = Vec::with_capacity(paths.len());
    let mut rx_responses: Vec<SteeringVector> = Vec::with_capacity(paths.len());
    let mut tx_gains: Vec<Complex64> = Vec::with_capacity(paths.len());
    for path in paths.paths() {
        if path.delay < 0.0 {
            return Err(SimError::InvalidParam("path delay must be nonnegative".into()));
        }
        let mut pattern = grid.samples().clone();
        for m in 0..m_sc {
            let mut phase = -2.0 * PI * cfg.subcarrier_spacing * m as f64 * path.delay;
            if include_ici {
                phase += 2.0 * PI * path.doppler * (m as f64 * t_sym / m_sc as f64);
            }
            let ramp = Complex64::from_polar(1.0, phase);
            for l in 0..l_sym {
                pattern[(m, l)] *= ramp;
            }
        }
        for l in 0..l_sym {
            let ramp = Complex64::from_polar(1.0, 2.0 * PI * path.doppler * l as f64 * t_sym);
            for m in 0..m_sc {
                pattern[(m, l)] *= ramp;
            }
        }
        patterns.push(pattern);
        rx_responses.push(crate::array::steering_vector(&path.angles, rx_geom));
        let a_tx = crate::array::steering_vector(&path.angles, tx_geom);
        tx_gains.push(a_tx.transpose_dot(f));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut antennas = Vec::with_capacity(rx_geom.len());
    for i in 0..rx_geom.len() {
        let mut r = DMatrix::<Complex64>::zeros(m_sc, l_sym);
        for (k, path) in paths.paths().iter().enumerate() {
            let alpha = amp * path.gain * rx_responses[k].entries()[i] * tx_gains[k];
            r.zip_apply(&patterns[k], |acc, p| *acc += alpha * p);
        }
        if noise_var > 0.0 {
            for entry in r.iter_mut() {
                *entry += complex_awgn(&mut rng, noise_var);
            }
        }
        antennas.push(r);
    }
    Ok(EchoCube { antennas })
}

/// Element-wise division of the echo by the transmit grid (channel transfer
/// extraction). Errors if any transmit entry is exactly zero.
pub fn extract_channel(echo: &EchoCube, grid: &OfdmGrid) -> Result<EchoCube> {
    if echo.subcarriers() != grid.subcarriers() || echo.symbols() != grid.symbols() {
        return Err(SimError::InputShape("echo and grid dimensions differ".into()));
    }
    for l in 0..grid.symbols() {
        for m in 0..grid.subcarriers() {
            if grid.samples()[(m, l)] == Complex64::ZERO {
                return Err(SimError::DivisionDomain(m, l));
            }
        }
    }
    let antennas = echo
        .antennas
        .iter()
        .map(|r| {
            let mut out = r.clone();
            out.zip_apply(grid.samples(), |v, s| *v /= s);
            out
        })
        .collect();
    Ok(EchoCube { antennas })
}

// ── Communication reception ─────────────────────────────────────────────

/// Scalar effective channel `sum_k gain_k (v^T u(theta_k)) (a(theta_k)^T f)`
/// without the array-gain and power scaling. `combiner: None` models an
/// omnidirectional vehicle antenna.
pub fn comm_effective_gain(
    paths: &PathSet,
    f: &SteeringVector,
    combiner: Option<&SteeringVector>,
    tx_geom: &ArrayGeometry,
    vehicle_geom: &ArrayGeometry,
) -> Complex64 {
    let mut total = Complex64::ZERO;
    for path in paths.paths() {
        let tx = crate::array::steering_vector(&path.angles, tx_geom).transpose_dot(f);
        let rx = match combiner {
            Some(v) => crate::array::steering_vector(&path.angles, vehicle_geom).transpose_dot(v),
            None => Complex64::ONE,
        };
        total += path.gain * tx * rx;
    }
    total
}

/// Linear receive SNR at the vehicle per the scalar channel model.
#[allow(clippy::too_many_arguments)]
pub fn comm_receive_snr(
    paths: &PathSet,
    f: &SteeringVector,
    combiner: Option<&SteeringVector>,
    tx_geom: &ArrayGeometry,
    vehicle_geom: &ArrayGeometry,
    cfg: &OfdmConfig,
    noise_var: f64,
) -> Result<f64> {
    if noise_var <= 0.0 {
        return Err(SimError::InvalidParam("noise_var must be positive".into()));
    }
    if let Some(v) = combiner {
        if v.len() != vehicle_geom.len() {
            return Err(SimError::InputShape(format!(
                "combiner length {} does not match vehicle array {}",
                v.len(),
                vehicle_geom.len()
            )));
        }
    }
    let m_r = if combiner.is_some() { vehicle_geom.len() } else { 1 };
    let zeta = array_gain_factor(tx_geom.len(), m_r);
    let g = comm_effective_gain(paths, f, combiner, tx_geom, vehicle_geom);
    Ok(cfg.tx_power * (zeta * g).norm_sqr() / noise_var)
}

/// Transmit `tx_bits` through the scalar effective channel, add noise,
/// demodulate and return the bit-error fraction. Reproducible from `rng_seed`.
#[allow(clippy::too_many_arguments)]
pub fn measure_ber(
    tx_bits: &[u8],
    paths: &PathSet,
    f: &SteeringVector,
    combiner: Option<&SteeringVector>,
    tx_geom: &ArrayGeometry,
    vehicle_geom: &ArrayGeometry,
    cfg: &OfdmConfig,
    bits_per_symbol: usize,
    noise_var: f64,
    rng_seed: u64,
) -> Result<f64> {
    check_bits_per_symbol(bits_per_symbol)?;
    if tx_bits.is_empty() || !tx_bits.len().is_multiple_of(bits_per_symbol) {
        return Err(SimError::InputShape(format!(
            "bit stream length {} is not a positive multiple of {bits_per_symbol}",
            tx_bits.len()
        )));
    }
    let m_r = if combiner.is_some() { vehicle_geom.len() } else { 1 };
    let zeta = array_gain_factor(tx_geom.len(), m_r);
    let h = zeta
        * cfg.tx_power.sqrt()
        * comm_effective_gain(paths, f, combiner, tx_geom, vehicle_geom);

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut errors = 0usize;
    let mut rx_bits = Vec::with_capacity(bits_per_symbol);
    for chunk in tx_bits.chunks_exact(bits_per_symbol) {
        let s = qam_modulate(chunk, bits_per_symbol)?;
        let noise = if noise_var > 0.0 {
            complex_awgn(&mut rng, noise_var)
        } else {
            Complex64::ZERO
        };
        // Coherent zero-forcing demodulation; a dead channel leaves only
        // noise at the slicer.
        let eq = if h.norm_sqr() > 0.0 { (h * s + noise) / h } else { noise };
        rx_bits.clear();
        qam_demodulate(eq, bits_per_symbol, &mut rx_bits);
        errors += chunk.iter().zip(&rx_bits).filter(|(a, b)| a != b).count();
    }
    Ok(errors as f64 / tx_bits.len() as f64)
}

/// SS-RSRP in dBm: linear average power of the SSS resource elements.
pub fn ss_rsrp(sss_res: &[Complex64]) -> Result<f64> {
    if sss_res.is_empty() {
        return Err(SimError::InputShape("empty SSS resource-element sequence".into()));
    }
    let mean_power = sss_res.iter().map(|x| x.norm_sqr()).sum::<f64>() / sss_res.len() as f64;
    Ok(10.0 * mean_power.log10() + 30.0)
}

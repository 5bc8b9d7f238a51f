#include "qmem/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numbers>
#include <thread>

namespace qmem {

namespace {

using cplx = std::complex<double>;
constexpr double kFwhmToSigma = 2.3548200450309493;
constexpr double kGroupTolerancePs = 1.0;

// Nearly sorted input: each element moves a short distance.
void insertion_sort(std::vector<std::int64_t>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    const std::int64_t x = v[i];
    std::size_t j = i;
    while (j > 0 && v[j - 1] > x) {
      v[j] = v[j - 1];
      --j;
    }
    v[j] = x;
  }
}

double norm_sum(const std::vector<Path>& paths) {
  double s = 0.0;
  for (const auto& p : paths) s += std::norm(p.amplitude);
  return s;
}

void push_tag(std::vector<std::int64_t>& ch, std::int64_t ps, std::int64_t duration_ps) {
  if (ps >= 0 && ps <= duration_ps) ch.push_back(ps);
}

struct Sampler {
  std::vector<double> cumulative;  // over outcomes, normalized to P(any)
  const OutcomeModel* model = nullptr;

  explicit Sampler(const OutcomeModel& m) : model(&m) {
    double acc = 0.0;
    for (const auto& o : m.outcomes) {
      acc += o.probability;
      cumulative.push_back(acc);
    }
  }
  // u uniform in [0, P(any))
  const Outcome& pick(double u) const {
    std::size_t i = 0;
    while (i + 1 < cumulative.size() && u >= cumulative[i]) ++i;
    return model->outcomes[i];
  }
};

struct EmitContext {
  double sigma_offset = 0.0;
  double jitter_s = 0.0;
  double jitter_i = 0.0;
  std::int64_t duration_ps = 0;
};

void emit(const Outcome& o, std::int64_t base_ps, double t_local, Rng& rng, const EmitContext& ctx,
          TagStream& out) {
  // The emission offset only matters relative to the partner photon.
  const double offset = o.kind == Outcome::both && ctx.sigma_offset > 0.0 ? ctx.sigma_offset * rng.normal() : 0.0;
  if (o.kind != Outcome::idler_only) {
    const double j = ctx.jitter_s > 0.0 ? ctx.jitter_s * rng.normal() : 0.0;
    push_tag(out.channels[TagStream::kSignal], base_ps + to_ps(t_local + o.signal_delay + offset + j),
             ctx.duration_ps);
  }
  if (o.kind != Outcome::signal_only) {
    const double j = ctx.jitter_i > 0.0 ? ctx.jitter_i * rng.normal() : 0.0;
    push_tag(out.channels[TagStream::kIdler], base_ps + to_ps(t_local + o.idler_delay + j), ctx.duration_ps);
  }
}

void add_dark_counts(TagStream& out, int channel, double rate, std::int64_t base_ps, double length, Rng& rng) {
  if (!(rate > 0.0)) return;
  double t = 0.0;
  while (true) {
    t += rng.exponential(rate);
    if (t >= length) break;
    push_tag(out.channels[channel], base_ps + to_ps(t), out.duration_ps);
  }
}

void sort_channels(TagStream& s) {
  for (auto& ch : s.channels) insertion_sort(ch);
}

}  // namespace

Analyzer direct_path() { return {Path{1.0, 0.0}}; }

Analyzer fiber_interferometer(double imbalance, double phase) {
  return {Path{0.5, 0.0}, Path{0.5 * std::polar(1.0, phase), imbalance}};
}

Analyzer memory_analyzer(const EchoReport& report) {
  Analyzer a{Path{std::polar(std::sqrt(report.eta_trans), report.trans_phase), 0.0}};
  for (const auto& e : report.echoes) a.push_back({std::polar(std::sqrt(e.efficiency), e.phase), e.delay});
  return a;
}

Analyzer hybrid_analyzer(const HybridBudget& b, double phi_s, int outcome, double tau) {
  const cplx ph = std::polar(1.0, phi_s);
  const double t = std::sqrt(b.eta_trans);
  const double e = std::sqrt(b.eta_echo);
  if (outcome > 0) return {Path{t, 0.0}, Path{ph * e, tau}};
  return {Path{-ph * e, 0.0}, Path{t, tau}};
}

double PathAmplitudeTable::total_weight() const {
  double s = 0.0;
  for (const auto& e : entries) s += std::norm(e.amplitude);
  return s;
}

PathAmplitudeTable route_pair(double t_pair, const Analyzer& signal, const Analyzer& idler,
                              const ChannelConfig& signal_channel, const ChannelConfig& idler_channel,
                              double delay_tolerance) {
  if (signal.empty() || idler.empty()) throw ProbabilityError("analyzer without paths");
  for (const auto* c : {&signal_channel, &idler_channel})
    if (!(c->transmission >= 0.0 && c->transmission <= 1.0))
      throw ProbabilityError("channel transmission outside [0,1]");
  if (signal.size() > 1 && idler.size() > 1) {
    for (std::size_t a = 0; a < idler.size(); ++a)
      for (std::size_t b = a + 1; b < idler.size(); ++b) {
        const double d = std::abs(idler[b].delay - idler[a].delay);
        bool matched = false;
        for (std::size_t x = 0; x < signal.size() && !matched; ++x)
          for (std::size_t y = x + 1; y < signal.size() && !matched; ++y)
            matched = std::abs(std::abs(signal[y].delay - signal[x].delay) - d) <= delay_tolerance;
        if (!matched) throw ProbabilityError("idler imbalance has no matching signal delay difference");
      }
  }
  PathAmplitudeTable t;
  const double as = std::sqrt(signal_channel.transmission);
  const double ai = std::sqrt(idler_channel.transmission);
  for (const auto& p : signal) t.signal.push_back({as * p.amplitude, t_pair + signal_channel.delay + p.delay});
  for (const auto& p : idler) t.idler.push_back({ai * p.amplitude, t_pair + idler_channel.delay + p.delay});
  for (const auto& s : t.signal)
    for (const auto& i : t.idler) t.entries.push_back({s.amplitude * i.amplitude, s.delay, i.delay});
  return t;
}

double OutcomeModel::p_both() const {
  double s = 0.0;
  for (const auto& o : outcomes)
    if (o.kind == Outcome::both) s += o.probability;
  return s;
}

double OutcomeModel::p_both_at(double delay) const {
  double s = 0.0;
  for (const auto& o : outcomes)
    if (o.kind == Outcome::both && std::abs((o.signal_delay - o.idler_delay) - delay) * 1e12 <= kGroupTolerancePs)
      s += o.probability;
  return s;
}

OutcomeModel build_outcomes(const PathAmplitudeTable& table, double eff_signal, double eff_idler,
                            double v_model) {
  if (!(eff_signal >= 0.0 && eff_signal <= 1.0 && eff_idler >= 0.0 && eff_idler <= 1.0))
    throw ProbabilityError("detector efficiency outside [0,1]");
  if (!(v_model >= 0.0 && v_model <= 1.0)) throw ProbabilityError("v_model outside [0,1]");

  struct Group {
    cplx coherent{0.0, 0.0};
    double incoherent = 0.0;
    double signal_time = 0.0;
    double idler_time = 0.0;
  };
  std::map<std::int64_t, Group> groups;
  for (const auto& e : table.entries) {
    const auto key = static_cast<std::int64_t>(std::llround((e.signal_time - e.idler_time) * 1e12));
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) {
      it->second.signal_time = e.signal_time;
      it->second.idler_time = e.idler_time;
    }
    it->second.coherent += e.amplitude;
    it->second.incoherent += std::norm(e.amplitude);
  }

  OutcomeModel m;
  double p_both = 0.0;
  for (const auto& [key, g] : groups) {
    const double p = eff_signal * eff_idler * (v_model * std::norm(g.coherent) + (1.0 - v_model) * g.incoherent);
    m.outcomes.push_back({Outcome::both, p, g.signal_time, g.idler_time});
    p_both += p;
  }
  const double qs = norm_sum(table.signal);
  const double qi = norm_sum(table.idler);
  m.signal_marginal = eff_signal * qs;
  m.idler_marginal = eff_idler * qi;
  const double p_s_only = m.signal_marginal - p_both;
  const double p_i_only = m.idler_marginal - p_both;
  if (p_s_only < -1e-12 || p_i_only < -1e-12)
    throw ProbabilityError("coincidence probability exceeds a single-side marginal");
  if (qs > 0.0)
    for (const auto& p : table.signal)
      m.outcomes.push_back({Outcome::signal_only, std::max(0.0, p_s_only) * std::norm(p.amplitude) / qs, p.delay, 0.0});
  if (qi > 0.0)
    for (const auto& p : table.idler)
      m.outcomes.push_back({Outcome::idler_only, std::max(0.0, p_i_only) * std::norm(p.amplitude) / qi, 0.0, p.delay});
  double total = 0.0;
  for (const auto& o : m.outcomes) total += o.probability;
  if (total > 1.0 + 1e-12) throw ProbabilityError("per-pair outcome probabilities sum above one");
  m.p_none = std::max(0.0, 1.0 - total);
  return m;
}

bool TagStream::is_sorted() const {
  for (const auto& ch : channels) {
    if (!std::is_sorted(ch.begin(), ch.end())) return false;
    if (!ch.empty() && (ch.front() < 0 || ch.back() > duration_ps)) return false;
  }
  return true;
}

std::int64_t to_ps(double seconds) { return static_cast<std::int64_t>(std::llround(seconds * 1e12)); }
double from_ps(std::int64_t ps) { return static_cast<double>(ps) * 1e-12; }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

double Rng::exponential(double rate) { return -std::log1p(-uniform()) / rate; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Marsaglia polar method: no trigonometric calls.
  double u, v, q;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    q = u * u + v * v;
  } while (q >= 1.0 || q == 0.0);
  const double r = std::sqrt(-2.0 * std::log(q) / q);
  spare_ = v * r;
  has_spare_ = true;
  return u * r;
}

std::vector<double> generate_pairs(const SourceConfig& cfg, double duration, std::uint64_t seed) {
  if (!(cfg.pair_rate >= 0.0)) throw ProbabilityError("negative pair rate");
  std::vector<double> t;
  if (!(cfg.pair_rate > 0.0) || !(duration > 0.0)) return t;
  Rng rng(seed);
  double now = 0.0;
  t.reserve(static_cast<std::size_t>(cfg.pair_rate * duration * 1.01) + 16);
  while (true) {
    now += rng.exponential(cfg.pair_rate);
    if (now >= duration) break;
    t.push_back(now);
  }
  return t;
}

TagStream detect(const std::vector<PathAmplitudeTable>& pairs, const DetectorConfig& signal_det,
                 const DetectorConfig& idler_det, double duration, std::uint64_t seed, double v_model,
                 double coherence_time) {
  TagStream out;
  out.duration_ps = to_ps(std::max(duration, 0.0));
  Rng rng(derive_seed(seed, 0));
  const EmitContext ctx{coherence_time / kFwhmToSigma, signal_det.jitter_sigma, idler_det.jitter_sigma,
                        out.duration_ps};
  for (const auto& pair : pairs) {
    const OutcomeModel m = build_outcomes(pair, signal_det.efficiency, idler_det.efficiency, v_model);
    const double u = rng.uniform();
    if (u >= m.p_detect_any()) continue;
    const Sampler sampler(m);
    emit(sampler.pick(u), 0, 0.0, rng, ctx, out);
  }
  Rng dark(derive_seed(seed, 1));
  add_dark_counts(out, TagStream::kSignal, signal_det.dark_rate, 0, duration, dark);
  add_dark_counts(out, TagStream::kIdler, idler_det.dark_rate, 0, duration, dark);
  for (auto& ch : out.channels) std::sort(ch.begin(), ch.end());
  return out;
}

RunResult run_experiment(const McConfig& cfg) {
  if (!(cfg.source.pair_rate >= 0.0)) throw ProbabilityError("negative pair rate");
  if (!(cfg.duration >= 0.0)) throw ProbabilityError("negative duration");
  if (!(cfg.slice_duration > 0.0)) throw ProbabilityError("slice duration must be positive");
  const PathAmplitudeTable table =
      route_pair(0.0, cfg.signal_analyzer, cfg.idler_analyzer, cfg.signal_channel, cfg.idler_channel);
  const OutcomeModel model =
      build_outcomes(table, cfg.signal_detector.efficiency, cfg.idler_detector.efficiency, cfg.v_model);
  const Sampler sampler(model);

  RunResult res;
  res.tags.duration_ps = to_ps(cfg.duration);
  RunMetadata& meta = res.meta;
  meta.duration = cfg.duration;
  meta.pair_rate = cfg.source.pair_rate;
  meta.detected_event_rate = cfg.source.pair_rate * model.p_detect_any();
  meta.signal_marginal = model.signal_marginal;
  meta.idler_marginal = model.idler_marginal;
  meta.signal_singles_rate = cfg.source.pair_rate * model.signal_marginal + cfg.signal_detector.dark_rate;
  meta.idler_singles_rate = cfg.source.pair_rate * model.idler_marginal + cfg.idler_detector.dark_rate;
  meta.coincidence_probability = model.p_both();
  meta.seed = cfg.seed;
  if (!(cfg.duration > 0.0)) return res;

  const auto n_slices = static_cast<std::size_t>(std::ceil(cfg.duration / cfg.slice_duration));
  meta.slices = n_slices;
  const EmitContext ctx{cfg.source.coherence_time / kFwhmToSigma, cfg.signal_detector.jitter_sigma,
                        cfg.idler_detector.jitter_sigma, res.tags.duration_ps};
  const double lambda = meta.detected_event_rate;

  std::vector<TagStream> parts(n_slices);
  auto run_slice = [&](std::size_t k) {
    TagStream& part = parts[k];
    part.duration_ps = res.tags.duration_ps;
    const double start = static_cast<double>(k) * cfg.slice_duration;
    const double length = std::min(cfg.slice_duration, cfg.duration - start);
    const std::int64_t base_ps = to_ps(start);
    const auto expect = static_cast<std::size_t>(lambda * length * 1.1) + 16;
    part.channels[0].reserve(expect);
    part.channels[1].reserve(expect / 2);
    Rng rng(derive_seed(cfg.seed, 2 * k));
    if (lambda > 0.0) {
      const double p_any = model.p_detect_any();
      double t = 0.0;
      while (true) {
        t += rng.exponential(lambda);
        if (t >= length) break;
        emit(sampler.pick(rng.uniform() * p_any), base_ps, t, rng, ctx, part);
      }
    }
    sort_channels(part);
    const std::array<std::size_t, 2> n_pair{part.channels[0].size(), part.channels[1].size()};
    Rng dark(derive_seed(cfg.seed, 2 * k + 1));
    add_dark_counts(part, TagStream::kSignal, cfg.signal_detector.dark_rate, base_ps, length, dark);
    add_dark_counts(part, TagStream::kIdler, cfg.idler_detector.dark_rate, base_ps, length, dark);
    for (int c = 0; c < 2; ++c) {
      auto& ch = part.channels[c];
      std::inplace_merge(ch.begin(), ch.begin() + static_cast<std::ptrdiff_t>(n_pair[c]), ch.end());
    }
  };

  unsigned n_threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, n_slices));
  if (n_threads <= 1) {
    for (std::size_t k = 0; k < n_slices; ++k) run_slice(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < n_threads; ++w)
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < n_slices; k = next++) run_slice(k);
      });
    for (auto& th : pool) th.join();
  }

  for (int c = 0; c < 2; ++c) {
    std::size_t total = 0;
    for (const auto& p : parts) total += p.channels[c].size();
    auto& dst = res.tags.channels[c];
    dst.reserve(total);
    for (auto& p : parts) {
      dst.insert(dst.end(), p.channels[c].begin(), p.channels[c].end());
      std::vector<std::int64_t>().swap(p.channels[c]);
    }
    insertion_sort(dst);
  }
  meta.signal_tags = res.tags.channels[0].size();
  meta.idler_tags = res.tags.channels[1].size();
  return res;
}

}  // namespace qmem

#include "cardioloop/ecg_dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <string>

#include "cardioloop/errors.hpp"

namespace cardioloop {

namespace {

double mean_of(const std::deque<double>& d) {
  if (d.empty()) return 0.0;
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

void push_capped(std::deque<double>& d, double v, std::size_t cap) {
  d.push_back(v);
  while (d.size() > cap) d.pop_front();
}

// Ideal low-pass impulse response at offset k (samples) from the centre.
double ideal_lowpass(double fc, double fs, double k) {
  if (k == 0.0) return 2.0 * fc / fs;
  return std::sin(2.0 * std::numbers::pi * fc * k / fs) / (std::numbers::pi * k);
}

}  // namespace

void FilterSpec::validate() const {
  if (!(fs > 0.0) || !std::isfinite(fs)) throw ParameterError("filter: fs must be positive");
  if (!(f_lo > 0.0 && f_lo < f_hi && f_hi < fs / 2.0))
    throw ParameterError("filter: band edges must satisfy 0 < f_lo < f_hi < fs/2");
  if (n_taps < 3 || n_taps % 2 == 0) throw ParameterError("filter: n_taps must be odd and >= 3");
}

std::vector<double> design_bandpass(const FilterSpec& spec) {
  spec.validate();
  const int n = spec.n_taps;
  const double mid = (n - 1) / 2.0;
  std::vector<double> h(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double k = i - mid;
    const double window = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
    h[static_cast<std::size_t>(i)] =
        (ideal_lowpass(spec.f_hi, spec.fs, k) - ideal_lowpass(spec.f_lo, spec.fs, k)) * window;
  }
  // Force exact symmetry; the two halves can differ in the last ulp.
  for (int i = 0; i < n / 2; ++i) {
    const double avg = 0.5 * (h[static_cast<std::size_t>(i)] + h[static_cast<std::size_t>(n - 1 - i)]);
    h[static_cast<std::size_t>(i)] = avg;
    h[static_cast<std::size_t>(n - 1 - i)] = avg;
  }
  const double g = magnitude_response(h, 0.5 * (spec.f_lo + spec.f_hi), spec.fs);
  for (double& c : h) c /= g;
  return h;
}

double magnitude_response(std::span<const double> coeffs, double f_hz, double fs) {
  std::complex<double> acc{0.0, 0.0};
  const double w = 2.0 * std::numbers::pi * f_hz / fs;
  for (std::size_t i = 0; i < coeffs.size(); ++i)
    acc += coeffs[i] * std::polar(1.0, -w * static_cast<double>(i));
  return std::abs(acc);
}

// ---------------------------------------------------------------------------
// FirFilter

FirFilter::FirFilter(std::vector<double> coeffs, double fs) : coeffs_(std::move(coeffs)), fs_(fs) {
  if (coeffs_.empty() || coeffs_.size() % 2 == 0)
    throw ParameterError("fir: coefficient count must be odd");
  if (!(fs_ > 0.0)) throw ParameterError("fir: fs must be positive");
  reset();
}

void FirFilter::reset() {
  x_.assign(2 * coeffs_.size(), 0.0);
  times_.assign(delay_samples() + 1, 0.0);
  pos_ = 0;
  count_ = 0;
  last_t_.reset();
}

FirFilter::Step FirFilter::push(const EcgSample& s) {
  if (!std::isfinite(s.t) || !std::isfinite(s.v) || s.t < 0.0)
    throw StreamError("ecg sample must have finite t >= 0 and finite v");
  Step step;
  if (last_t_) {
    if (s.t < *last_t_)
      throw StreamError("timestamp regression: " + std::to_string(s.t) + " after " +
                        std::to_string(*last_t_));
    const double missing = (s.t - *last_t_) * fs_ - 1.0;
    if (missing > kMaxGapSamples) {
      reset();
      step.discontinuity = true;
    }
  }
  last_t_ = s.t;

  const std::size_t n = coeffs_.size();
  pos_ = (pos_ + n - 1) % n;
  x_[pos_] = s.v;
  x_[pos_ + n] = s.v;

  const std::size_t delay = delay_samples();
  times_[count_ % (delay + 1)] = s.t;
  if (count_ >= delay) {
    double y = 0.0;
    const double* window = x_.data() + pos_;
    for (std::size_t k = 0; k < n; ++k) y += coeffs_[k] * window[k];
    step.out = FilteredSample{times_[(count_ - delay) % (delay + 1)], y};
  }
  ++count_;
  return step;
}

std::vector<FilteredSample> FirFilter::flush() {
  std::vector<FilteredSample> out;
  if (!last_t_) return out;
  const double t0 = *last_t_;
  for (std::size_t k = 1; k <= delay_samples(); ++k) {
    auto step = push({t0 + static_cast<double>(k) / fs_, 0.0});
    if (step.out) out.push_back(*step.out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// QrsDetector

void QrsDetectorConfig::validate() const {
  if (!(fs > 0.0)) throw ParameterError("qrs: fs must be positive");
  if (!(threshold_coeff > 0.0 && threshold_coeff < 1.0))
    throw ParameterError("qrs: threshold_coeff must be in (0, 1)");
  if (!(refractory_s > 0.0)) throw ParameterError("qrs: refractory must be positive");
  if (!(integration_s > 0.0)) throw ParameterError("qrs: integration window must be positive");
  if (buffer_len == 0) throw ParameterError("qrs: buffer_len must be positive");
  if (!(searchback_factor > 1.0)) throw ParameterError("qrs: searchback_factor must exceed 1");
  if (!(learning_s > 0.0)) throw ParameterError("qrs: learning period must be positive");
  if (!(peak_timeout_s > 0.0) || !(preblank_s > 0.0) || searchback_min_s < 0.0)
    throw ParameterError("qrs: timing constants must be positive");
}

double QrsDetector::FrontEnd::step(double v) {
  const double d = prev_v ? v - *prev_v : 0.0;
  prev_v = v;
  window.push_back(std::abs(d));
  while (window.size() > len) window.pop_front();
  // Summed fresh each sample: no running-sum drift over long sessions.
  double sum = 0.0;
  for (double w : window) sum += w;
  return sum / static_cast<double>(len);
}

QrsDetector::QrsDetector(QrsDetectorConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  auto samples = [&](double s) { return static_cast<std::int64_t>(std::lround(s * cfg_.fs)); };
  ma_len_ = static_cast<std::size_t>(std::max<std::int64_t>(1, samples(cfg_.integration_s)));
  peak_timeout_ = std::max<std::int64_t>(1, samples(cfg_.peak_timeout_s));
  preblank_ = std::max<std::int64_t>(1, samples(cfg_.preblank_s));
  searchback_min_ = samples(cfg_.searchback_min_s);
  recent_cap_ = ma_len_ + static_cast<std::size_t>(peak_timeout_) + 16;
  reset();
}

void QrsDetector::reset() {
  learning_ = true;
  learn_buf_.clear();
  learn_maxima_.clear();
  learn_front_ = FrontEnd{ma_len_};
  learn_cur_max_ = 0.0;
  learn_window_start_ = 0.0;
  init_qrs_level_ = 0.0;
  reset_detection_state();
}

void QrsDetector::reset_detection_state() {
  n_ = -1;
  front_ = FrontEnd{ma_len_};
  recent_.clear();
  pk_max_ = 0.0;
  pk_max_idx_ = 0;
  since_max_ = 0;
  last_x_ = 0.0;
  pending_.reset();
  preblank_count_ = 0;
  qrs_buf_.assign(cfg_.buffer_len, init_qrs_level_);
  noise_buf_.assign(cfg_.buffer_len, 0.0);
  rr_buf_.assign(cfg_.buffer_len, cfg_.fs);  // 1 s
  threshold_ = cfg_.threshold_coeff * init_qrs_level_;
  last_qrs_.reset();
  searchback_.reset();
}

void QrsDetector::push(std::span<const FilteredSample> batch, std::vector<RPeak>& out) {
  for (const auto& s : batch) push(s, out);
}

void QrsDetector::push(const FilteredSample& s, std::vector<RPeak>& out) {
  if (!learning_) {
    process(s, out);
    return;
  }
  if (learn_buf_.empty()) learn_window_start_ = s.t;
  if (s.t - learn_window_start_ >= cfg_.learning_s) {
    finish_learning(out);
    if (!learning_) {
      process(s, out);
      return;
    }
    // Learning restarted: this sample opens the new window.
    learn_window_start_ = s.t;
  }
  const std::size_t window = static_cast<std::size_t>((s.t - learn_window_start_) / 1.0);
  if (window > learn_maxima_.size()) {
    learn_maxima_.push_back(learn_cur_max_);
    learn_cur_max_ = 0.0;
  }
  learn_cur_max_ = std::max(learn_cur_max_, learn_front_.step(s.v));
  learn_buf_.push_back(s);
}

void QrsDetector::finish_learning(std::vector<RPeak>& out) {
  std::vector<double> maxima = learn_maxima_;
  maxima.push_back(learn_cur_max_);
  const double level = std::accumulate(maxima.begin(), maxima.end(), 0.0) /
                       static_cast<double>(maxima.size());
  learn_maxima_.clear();
  learn_cur_max_ = 0.0;
  learn_front_.reset();
  if (!(level > 0.0) || !std::isfinite(level)) {
    // Nothing but a flat line so far; keep learning.
    learn_buf_.clear();
    return;
  }
  init_qrs_level_ = level;
  learning_ = false;
  reset_detection_state();
  std::vector<FilteredSample> replay;
  replay.swap(learn_buf_);
  for (const auto& s : replay) process(s, out);
}

void QrsDetector::flush(std::vector<RPeak>& out) {
  if (learning_ && !learn_buf_.empty()) finish_learning(out);
  if (learning_) return;
  if (pending_) {
    Candidate c = *pending_;
    pending_.reset();
    decide(c, out);
  }
}

void QrsDetector::process(const FilteredSample& s, std::vector<RPeak>& out) {
  ++n_;
  recent_.push_back({s.t, s.v});
  while (recent_.size() > recent_cap_) recent_.pop_front();

  const double x = front_.step(s.v);
  const auto pk = find_peak(x, n_);

  std::optional<Candidate> confirmed;
  if (pk) {
    if (!pending_ || pk->height > pending_->height) {
      pending_ = pk;
      preblank_count_ = preblank_;
    } else if (--preblank_count_ == 0) {
      confirmed = pending_;
      pending_.reset();
    }
  } else if (pending_ && --preblank_count_ == 0) {
    confirmed = pending_;
    pending_.reset();
  }

  if (confirmed) decide(*confirmed, out);
  check_searchback(n_, out);
}

std::optional<QrsDetector::Candidate> QrsDetector::find_peak(double x, std::int64_t n) {
  std::optional<Candidate> found;
  if (since_max_ > 0) ++since_max_;
  const bool rising = x > last_x_ && x > pk_max_;
  if (rising) {
    pk_max_ = x;
    pk_max_idx_ = n;
    if (pk_max_ > 0.0) since_max_ = 1;
  } else if (x < pk_max_ / 2.0 || since_max_ > peak_timeout_) {
    Candidate c;
    c.idx = pk_max_idx_;
    c.height = pk_max_;
    // R is the largest filtered excursion inside the integrator window that
    // produced this peak.
    const std::int64_t lo = pk_max_idx_ - static_cast<std::int64_t>(ma_len_) - 2;
    const std::int64_t newest = n_;
    const std::int64_t oldest = n_ - static_cast<std::int64_t>(recent_.size()) + 1;
    double best = -1.0;
    for (std::int64_t i = std::max(lo, oldest); i <= std::min(pk_max_idx_, newest); ++i) {
      const auto& r = recent_[static_cast<std::size_t>(i - oldest)];
      if (std::abs(r.v) > best) {
        best = std::abs(r.v);
        c.r_t = r.t;
        c.r_v = r.v;
      }
    }
    if (best >= 0.0) found = c;
    pk_max_ = 0.0;
    since_max_ = 0;
  }
  last_x_ = x;
  return found;
}

void QrsDetector::decide(const Candidate& c, std::vector<RPeak>& out) {
  if (last_qrs_ && c.r_t - last_qrs_->r_t < cfg_.refractory_s) return;
  if (c.height > threshold_) {
    accept(c, out);
    return;
  }
  push_capped(noise_buf_, c.height, cfg_.buffer_len);
  const bool far_enough = !last_qrs_ || c.idx - last_qrs_->idx > searchback_min_;
  if (far_enough && (!searchback_ || c.height > searchback_->height)) searchback_ = c;
  update_threshold();
}

void QrsDetector::check_searchback(std::int64_t n, std::vector<RPeak>& out) {
  if (!last_qrs_ || !searchback_) return;
  const double limit = cfg_.searchback_factor * mean_of(rr_buf_);
  if (static_cast<double>(n - last_qrs_->idx) <= limit) return;
  if (!(searchback_->height > threshold_ / 2.0)) return;
  const Candidate c = *searchback_;
  searchback_.reset();
  if (c.r_t - last_qrs_->r_t >= cfg_.refractory_s) accept(c, out);
}

void QrsDetector::accept(const Candidate& c, std::vector<RPeak>& out) {
  push_capped(qrs_buf_, c.height, cfg_.buffer_len);
  if (last_qrs_) {
    const double rr = static_cast<double>(c.idx - last_qrs_->idx);
    if (rr >= 60.0 / 230.0 * cfg_.fs && rr <= 60.0 / 25.0 * cfg_.fs)
      push_capped(rr_buf_, rr, cfg_.buffer_len);
  }
  last_qrs_ = c;
  searchback_.reset();
  update_threshold();
  out.push_back({c.r_t, c.r_v});
}

void QrsDetector::update_threshold() {
  const double qrs = mean_of(qrs_buf_);
  const double noise = mean_of(noise_buf_);
  const double th = noise + cfg_.threshold_coeff * (qrs - noise);
  if (std::isfinite(th) && th > 0.0 && qrs > noise) {
    threshold_ = th;
    return;
  }
  // Diverged: fall back to the levels established during learning.
  qrs_buf_.assign(cfg_.buffer_len, init_qrs_level_);
  noise_buf_.assign(cfg_.buffer_len, 0.0);
  threshold_ = cfg_.threshold_coeff * init_qrs_level_;
}

// ---------------------------------------------------------------------------
// HrEstimator

HrEstimator::HrEstimator(HrEstimatorConfig cfg) : cfg_(cfg) {
  if (!(cfg_.window_s > 0.0)) throw ParameterError("hr: window must be positive");
  if (!(cfg_.min_bpm > 0.0 && cfg_.min_bpm < cfg_.max_bpm))
    throw ParameterError("hr: invalid validity gate");
}

void HrEstimator::reset() {
  origin_.reset();
  peaks_.clear();
}

std::optional<HrEstimate> HrEstimator::push(const RPeak& p) {
  if (!origin_) origin_ = p.t;
  peaks_.push_back(p.t);
  while (!peaks_.empty() && peaks_.front() < p.t - cfg_.window_s) peaks_.pop_front();

  const double rr_min = 60.0 / cfg_.max_bpm;
  const double rr_max = 60.0 / cfg_.min_bpm;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 1; i < peaks_.size(); ++i) {
    const double rr = peaks_[i] - peaks_[i - 1];
    if (rr < rr_min || rr > rr_max) continue;
    sum += rr;
    ++n;
  }
  if (n == 0) return std::nullopt;
  if (p.t - *origin_ < cfg_.warmup_s) return std::nullopt;
  return HrEstimate{p.t, 60.0 * static_cast<double>(n) / sum, n};
}

// ---------------------------------------------------------------------------
// EcgPipeline

namespace {
QrsDetectorConfig with_fs(QrsDetectorConfig c, double fs) {
  c.fs = fs;
  return c;
}
}  // namespace

EcgPipeline::EcgPipeline(PipelineConfig cfg)
    : cfg_(cfg),
      filter_(design_bandpass(cfg.filter), cfg.filter.fs),
      detector_(with_fs(cfg.detector, cfg.filter.fs)),
      hr_(HrEstimatorConfig{cfg.hr_window_s, 25.0, 230.0,
                            std::max(cfg.hr_window_s,
                                     static_cast<double>((cfg.filter.n_taps - 1) / 2) / cfg.filter.fs)}) {
  cfg_.detector.fs = cfg.filter.fs;
}

double EcgPipeline::warmup_s() const { return std::max(cfg_.hr_window_s, filter_.delay_s()); }

void EcgPipeline::push(std::span<const EcgSample> batch, PipelineEvents& ev) {
  for (const auto& s : batch) push(s, ev);
}

void EcgPipeline::push(const EcgSample& s, PipelineEvents& ev) {
  const auto step = filter_.push(s);
  if (step.discontinuity) {
    detector_.reset();
    hr_.reset();
    latest_.reset();
    origin_set_ = false;
    ev.discontinuity = true;
  }
  if (!origin_set_) {
    hr_.set_origin(s.t);
    origin_set_ = true;
  }
  if (step.out) on_filtered(*step.out, ev);
}

void EcgPipeline::on_filtered(const FilteredSample& f, PipelineEvents& ev) {
  scratch_.clear();
  detector_.push(f, scratch_);
  for (const auto& p : scratch_) {
    ev.peaks.push_back(p);
    if (auto e = hr_.push(p)) {
      latest_ = e;
      ev.estimates.push_back(*e);
    }
  }
}

void EcgPipeline::finish(PipelineEvents& ev) {
  for (const auto& f : filter_.flush()) on_filtered(f, ev);
  scratch_.clear();
  detector_.flush(scratch_);
  for (const auto& p : scratch_) {
    ev.peaks.push_back(p);
    if (auto e = hr_.push(p)) {
      latest_ = e;
      ev.estimates.push_back(*e);
    }
  }
}

}  // namespace cardioloop

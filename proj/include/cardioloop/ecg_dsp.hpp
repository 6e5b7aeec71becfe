#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace cardioloop {

// Raw electrode sample: seconds since stream start, millivolts.
struct EcgSample {
  double t = 0.0;
  double v = 0.0;
};

struct FilterSpec {
  double f_lo = 3.0;   // Hz
  double f_hi = 45.0;  // Hz
  int n_taps = 129;    // odd, so the group delay is a whole number of samples
  double fs = 130.0;   // Hz

  void validate() const;
};

// Linear-phase windowed-sinc (Hamming) band-pass, normalised to unit gain at
// the band centre.
std::vector<double> design_bandpass(const FilterSpec& spec);

// |H(f)| of an FIR coefficient vector.
double magnitude_response(std::span<const double> coeffs, double f_hz, double fs);

struct FilteredSample {
  double t = 0.0;  // delay-compensated timestamp
  double v = 0.0;
};

// Streaming causal FIR. Output timestamps are shifted back by the group delay,
// so a delta at t produces its peak output stamped t.
class FirFilter {
 public:
  struct Step {
    std::optional<FilteredSample> out;
    bool discontinuity = false;  // history was reset because of a gap
  };

  FirFilter(std::vector<double> coeffs, double fs);

  Step push(const EcgSample& s);

  // Feeds zeros to drain the samples still held in the delay line.
  std::vector<FilteredSample> flush();

  void reset();

  std::size_t delay_samples() const { return (coeffs_.size() - 1) / 2; }
  double delay_s() const { return static_cast<double>(delay_samples()) / fs_; }
  const std::vector<double>& coeffs() const { return coeffs_; }

  // Spacing beyond which the stream is treated as interrupted.
  static constexpr double kMaxGapSamples = 5.0;

 private:
  std::vector<double> coeffs_;
  double fs_;
  std::vector<double> x_;       // doubled ring so the window is contiguous
  std::vector<double> times_;   // input timestamps, ring of delay+1
  std::size_t pos_ = 0;
  std::uint64_t count_ = 0;
  std::optional<double> last_t_;
};

struct RPeak {
  double t = 0.0;
  double amplitude = 0.0;
};

// Hamilton-style detector constants. Defaults follow the published
// open-source detector family; all are tunable.
struct QrsDetectorConfig {
  double fs = 130.0;
  double threshold_coeff = 0.3125;
  double refractory_s = 0.200;
  double integration_s = 0.080;
  std::size_t buffer_len = 8;
  double searchback_factor = 1.5;
  double searchback_min_s = 0.360;  // noise peaks closer than this to a beat never qualify
  double learning_s = 2.0;
  double peak_timeout_s = 0.095;
  double preblank_s = 0.200;

  void validate() const;
};

class QrsDetector {
 public:
  explicit QrsDetector(QrsDetectorConfig cfg = {});

  void push(const FilteredSample& s, std::vector<RPeak>& out);
  void push(std::span<const FilteredSample> batch, std::vector<RPeak>& out);

  // Resolves any pending candidate at end of stream.
  void flush(std::vector<RPeak>& out);

  void reset();

  bool learning() const { return learning_; }
  double threshold() const { return threshold_; }
  const QrsDetectorConfig& config() const { return cfg_; }

 private:
  struct Candidate {
    std::int64_t idx = 0;  // integrated-signal index of the peak
    double height = 0.0;
    double r_t = 0.0;
    double r_v = 0.0;
  };
  struct Recent {
    double t;
    double v;
  };
  // Rectified first difference followed by a moving-average integrator.
  struct FrontEnd {
    explicit FrontEnd(std::size_t l = 1) : len(l) {}
    std::size_t len;
    std::optional<double> prev_v;
    std::deque<double> window;
    double step(double v);
    void reset() {
      prev_v.reset();
      window.clear();
    }
  };

  void process(const FilteredSample& s, std::vector<RPeak>& out);
  std::optional<Candidate> find_peak(double x, std::int64_t n);
  void decide(const Candidate& c, std::vector<RPeak>& out);
  void check_searchback(std::int64_t n, std::vector<RPeak>& out);
  void accept(const Candidate& c, std::vector<RPeak>& out);
  void update_threshold();
  void finish_learning(std::vector<RPeak>& out);
  void reset_detection_state();

  QrsDetectorConfig cfg_;
  std::size_t ma_len_;
  std::int64_t peak_timeout_;
  std::int64_t preblank_;
  std::int64_t searchback_min_;
  std::size_t recent_cap_;

  // learning
  bool learning_ = true;
  std::vector<FilteredSample> learn_buf_;
  std::vector<double> learn_maxima_;
  FrontEnd learn_front_;
  double learn_cur_max_ = 0.0;
  double learn_window_start_ = 0.0;
  double init_qrs_level_ = 0.0;

  // per-sample front end
  std::int64_t n_ = -1;
  FrontEnd front_;
  std::deque<Recent> recent_;  // filtered samples, newest at back

  // peak finder
  double pk_max_ = 0.0;
  std::int64_t pk_max_idx_ = 0;
  std::int64_t since_max_ = 0;
  double last_x_ = 0.0;

  // pre-blanking
  std::optional<Candidate> pending_;
  std::int64_t preblank_count_ = 0;

  // decision state
  std::deque<double> qrs_buf_;
  std::deque<double> noise_buf_;
  std::deque<double> rr_buf_;  // samples
  double threshold_ = 0.0;
  std::optional<Candidate> last_qrs_;
  std::optional<Candidate> searchback_;
};

struct HrEstimate {
  double t = 0.0;
  double hr_bpm = 0.0;
  std::size_t n_beats = 0;  // RR intervals averaged
};

struct HrEstimatorConfig {
  double window_s = 10.0;
  double min_bpm = 25.0;
  double max_bpm = 230.0;
  double warmup_s = 0.0;  // measured from the stream origin
};

// Mean heart rate over the RR intervals inside a trailing window.
class HrEstimator {
 public:
  explicit HrEstimator(HrEstimatorConfig cfg = {});

  // Sets the stream origin used by the warm-up gate; defaults to the first peak.
  void set_origin(double t0) { origin_ = t0; }

  std::optional<HrEstimate> push(const RPeak& p);
  void reset();

 private:
  HrEstimatorConfig cfg_;
  std::optional<double> origin_;
  std::deque<double> peaks_;
};

struct PipelineConfig {
  FilterSpec filter;
  QrsDetectorConfig detector;
  double hr_window_s = 10.0;
};

struct PipelineEvents {
  std::vector<RPeak> peaks;
  std::vector<HrEstimate> estimates;
  bool discontinuity = false;

  void clear() {
    peaks.clear();
    estimates.clear();
    discontinuity = false;
  }
};

// filter -> detect -> HR, one sample at a time.
class EcgPipeline {
 public:
  explicit EcgPipeline(PipelineConfig cfg = {});

  void push(const EcgSample& s, PipelineEvents& ev);
  void push(std::span<const EcgSample> batch, PipelineEvents& ev);
  void finish(PipelineEvents& ev);

  const std::optional<HrEstimate>& latest() const { return latest_; }
  double warmup_s() const;
  const PipelineConfig& config() const { return cfg_; }

 private:
  void on_filtered(const FilteredSample& f, PipelineEvents& ev);

  PipelineConfig cfg_;
  FirFilter filter_;
  QrsDetector detector_;
  HrEstimator hr_;
  std::optional<HrEstimate> latest_;
  bool origin_set_ = false;
  std::vector<RPeak> scratch_;
};

}  // namespace cardioloop

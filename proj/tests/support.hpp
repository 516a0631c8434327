#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "docpipe/backends.hpp"
#include "docpipe/corpus.hpp"
#include "docpipe/orchestrator.hpp"

namespace support {

namespace fs = std::filesystem;
using namespace docpipe;

inline fs::path sample_dir() { return fs::path(DOCPIPE_SAMPLE_DIR); }
inline fs::path bundled_corpus_dir() { return fs::path(DOCPIPE_CORPUS_DIR); }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("docpipe-test-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
}

inline std::string slurp(const fs::path& path) { return read_text_file(path); }

inline ClassConfig sample_classes() { return load_class_config(sample_dir() / "classes.json"); }

// Sample config with millisecond-scale backoff so retry paths stay fast.
inline EngineConfig sample_config() {
  EngineConfig c = load_engine_config(sample_dir() / "engine.json");
  c.retry.base_delay = Millis(1.0);
  return c;
}

inline fs::path write_packet(const fs::path& dir, const DocumentPacket& packet) {
  const fs::path p = dir / (packet.packet_id + ".json");
  write_file(p, packet_to_json(packet).dump(2));
  return p;
}

inline std::vector<GeneratedPacket> corpus(int count, std::uint64_t seed, double low_rate = 0.0) {
  CorpusOptions o;
  o.count = count;
  o.seed = seed;
  o.low_confidence_rate = low_rate;
  return generate_packets(sample_classes(), o);
}

// Thread-safe record of requested delays; never actually sleeps.
class RecordingSleeper {
 public:
  Sleeper sleeper() {
    return [this](Millis d) {
      std::lock_guard lock(mu_);
      delays_.push_back(d);
    };
  }
  std::vector<Millis> delays() const {
    std::lock_guard lock(mu_);
    return delays_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<Millis> delays_;
};

// Wraps an extractor; counts calls and the peak number of calls in flight.
class InstrumentedExtractor : public ExtractorBackend {
 public:
  InstrumentedExtractor(std::shared_ptr<ExtractorBackend> inner, std::chrono::milliseconds hold = {})
      : inner_(std::move(inner)), hold_(hold) {}

  std::string name() const override { return inner_->name(); }
  BackendResponse extract(const ModelRequest& request) override {
    const int now = ++in_flight_;
    int prev = peak_.load();
    while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
    }
    ++calls_;
    if (hold_.count() > 0) std::this_thread::sleep_for(hold_);
    struct Leave {
      std::atomic<int>& n;
      ~Leave() { --n; }
    } leave{in_flight_};
    return inner_->extract(request);
  }

  int calls() const { return calls_.load(); }
  int peak() const { return peak_.load(); }

 private:
  std::shared_ptr<ExtractorBackend> inner_;
  std::chrono::milliseconds hold_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
  std::atomic<int> calls_{0};
};

// Raises BackendError for the first `failures` calls, then delegates.
class FlakyExtractor : public ExtractorBackend {
 public:
  FlakyExtractor(std::shared_ptr<ExtractorBackend> inner, int failures) : inner_(std::move(inner)), left_(failures) {}

  std::string name() const override { return inner_->name(); }
  BackendResponse extract(const ModelRequest& request) override {
    if (left_.fetch_sub(1) > 0) throw BackendError("transient outage");
    return inner_->extract(request);
  }

 private:
  std::shared_ptr<ExtractorBackend> inner_;
  std::atomic<int> left_;
};

inline std::shared_ptr<ExtractorBackend> mock_extractor() { return std::make_shared<MockExtractor>(sample_classes()); }
inline std::shared_ptr<ClassifierBackend> mock_classifier() { return std::make_shared<MockClassifier>(); }

}  // namespace support

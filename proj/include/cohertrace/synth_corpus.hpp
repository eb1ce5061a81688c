#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cohertrace/corpus_io.hpp"
#include "cohertrace/ngram_model.hpp"

namespace cohertrace {

/// Deterministic, platform-independent draws on top of mt19937_64.
class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : engine_(seed) {}
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed and an index into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

struct TopicModel {
  std::string topic_id;
  std::shared_ptr<const ReferenceNgramModel> generator;
};

/// Trains a topic generator on lines of seed text.
TopicModel make_topic(std::string topic_id, const std::vector<std::string>& seed_lines, int order = 2,
                      double alpha = 0.001);

inline constexpr int kMaxSeverity = 4;
inline constexpr double kDefaultPMax = 0.8;

/// Linear map severity / 4 * p_max.
double switch_probability(int severity, double p_max = kDefaultPMax);

struct DerailmentSpec {
  int severity = 0;
  double switch_prob = 0.0;
  std::size_t min_segment = 20;

  static DerailmentSpec for_severity(int severity, std::size_t min_segment, double p_max = kDefaultPMax);
};

/// Samples `length` tokens. Generation starts on topics[0]; at every multiple
/// of `min_segment` it moves to a uniformly chosen different topic with
/// probability `switch_prob`. The transcript carries the severity as a TALD
/// rating and records the topic sequence in its metadata ("topics",
/// "topic_switches").
Transcript generate_transcript(const std::vector<TopicModel>& topics, const DerailmentSpec& spec,
                               std::size_t length, std::uint64_t seed);

struct SynthConfig {
  struct Topic {
    std::string id;
    std::filesystem::path seed_text;
  };
  std::string name = "synthetic";
  std::vector<Topic> topics;
  std::array<std::size_t, kMaxSeverity + 1> counts_per_severity{40, 40, 40, 40, 40};
  std::size_t length_min = 150;
  std::size_t length_max = 300;
  std::size_t min_segment = 20;
  double p_max = kDefaultPMax;
  int generator_order = 2;
  double generator_alpha = 0.001;
  std::uint64_t seed = 0;
};

/// Reads the JSON generator configuration. Relative seed-text paths resolve
/// against the config file's directory. Unknown keys are rejected.
SynthConfig load_synth_config(const std::filesystem::path& path);

std::vector<std::string> read_seed_lines(const std::filesystem::path& path);

std::vector<TopicModel> build_topics(const SynthConfig& config);

/// Ids are "syn<seed>-<index>", so corpora from different seeds never share
/// ids.
RatedCorpus generate_corpus(const SynthConfig& config, std::uint64_t seed);

}  // namespace cohertrace

#include "cohertrace/synth_corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "cohertrace/errors.hpp"
#include "io_util.hpp"

namespace cohertrace {

double SynthRng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t SynthRng::below(std::uint64_t n) {
  if (n == 0) throw Error("SynthRng::below(0)");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

TopicModel make_topic(std::string topic_id, const std::vector<std::string>& seed_lines, int order, double alpha) {
  auto model = std::make_shared<const ReferenceNgramModel>(ngram_train(seed_lines, order, alpha, 1));
  if (model->vocab_size() <= 2) throw Error("topic '" + topic_id + "' has no words");
  return {std::move(topic_id), std::move(model)};
}

double switch_probability(int severity, double p_max) {
  if (severity < 0 || severity > kMaxSeverity) throw Error("severity must be in [0, 4]");
  if (p_max < 0.0 || p_max > 1.0) throw Error("p_max must be in [0, 1]");
  return static_cast<double>(severity) / kMaxSeverity * p_max;
}

DerailmentSpec DerailmentSpec::for_severity(int severity, std::size_t min_segment, double p_max) {
  if (min_segment == 0) throw Error("min_segment must be positive");
  return {severity, switch_probability(severity, p_max), min_segment};
}

namespace {

using TokenId = ReferenceNgramModel::TokenId;

// Draws a real word (never UNK or EOS) from P(. | context).
TokenId sample_word(const ReferenceNgramModel& model, std::span<const TokenId> context, SynthRng& rng) {
  const auto p = model.distribution(context);
  double total = 0.0;
  for (std::size_t id = 2; id < p.size(); ++id) total += p[id];
  const double target = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t id = 2; id < p.size(); ++id) {
    acc += p[id];
    if (target < acc) return static_cast<TokenId>(id);
  }
  return static_cast<TokenId>(p.size() - 1);
}

}  // namespace

Transcript generate_transcript(const std::vector<TopicModel>& topics, const DerailmentSpec& spec, std::size_t length,
                               std::uint64_t seed) {
  if (topics.size() < 2) throw TooFewTopics("derailment needs at least 2 topics, got " + std::to_string(topics.size()));
  if (spec.min_segment == 0 || length < spec.min_segment) throw Error("length must be >= min_segment");
  if (spec.switch_prob < 0.0 || spec.switch_prob > 1.0) throw Error("switch_prob must be in [0, 1]");

  SynthRng rng(seed);
  std::size_t current = 0;
  std::size_t switches = 0;
  std::string topic_path = topics[current].topic_id;
  std::vector<TokenId> context;
  std::string text;

  for (std::size_t pos = 0; pos < length; ++pos) {
    if (pos > 0 && pos % spec.min_segment == 0) {
      if (rng.uniform() < spec.switch_prob) {
        auto next = rng.below(topics.size() - 1);
        if (next >= current) ++next;
        current = next;
        ++switches;
        context.clear();
      }
      topic_path += "," + topics[current].topic_id;
    }
    const auto& model = *topics[current].generator;
    const auto keep = std::min<std::size_t>(context.size(), static_cast<std::size_t>(model.order() - 1));
    const auto id = sample_word(model, std::span<const TokenId>(context).last(keep), rng);
    context.push_back(id);
    if (!text.empty()) text.push_back(' ');
    text += model.vocabulary()[id];
  }

  Transcript t;
  t.id = "syn-" + std::to_string(seed);
  t.text = std::move(text);
  t.rating = tald_rating(static_cast<double>(spec.severity));
  t.metadata["topics"] = std::move(topic_path);
  t.metadata["topic_switches"] = std::to_string(switches);
  return t;
}

std::vector<std::string> read_seed_lines(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    auto norm = normalize_text(line);
    if (!norm.empty()) lines.push_back(std::move(norm));
  }
  if (lines.empty()) throw EmptyCorpus(path.string() + ": no seed text");
  return lines;
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
  using nlohmann::json;
  const json doc = json::parse(detail::read_file(path));
  if (!doc.is_object()) throw ConfigError(path.string() + ": expected a JSON object");
  const auto base = path.parent_path();
  SynthConfig cfg;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "name") {
        cfg.name = value.get<std::string>();
      } else if (key == "topics") {
        for (const auto& t : value) {
          for (const auto& [tk, tv] : t.items()) {
            if (tk != "id" && tk != "seed_text") throw ConfigError("topics: unknown key '" + tk + "'");
          }
          std::filesystem::path p = t.at("seed_text").get<std::string>();
          cfg.topics.push_back({t.at("id").get<std::string>(), p.is_absolute() ? p : base / p});
        }
      } else if (key == "counts_per_severity") {
        const auto counts = value.get<std::vector<std::size_t>>();
        if (counts.size() != cfg.counts_per_severity.size()) throw ConfigError("counts_per_severity needs 5 entries");
        std::copy(counts.begin(), counts.end(), cfg.counts_per_severity.begin());
      } else if (key == "length_range") {
        const auto r = value.get<std::vector<std::size_t>>();
        if (r.size() != 2 || r[0] > r[1]) throw ConfigError("length_range must be [min, max]");
        cfg.length_min = r[0];
        cfg.length_max = r[1];
      } else if (key == "min_segment") {
        cfg.min_segment = value.get<std::size_t>();
      } else if (key == "p_max") {
        cfg.p_max = value.get<double>();
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else if (key == "generator") {
        for (const auto& [gk, gv] : value.items()) {
          if (gk == "order") {
            cfg.generator_order = gv.get<int>();
          } else if (gk == "alpha") {
            cfg.generator_alpha = gv.get<double>();
          } else {
            throw ConfigError("generator: unknown key '" + gk + "'");
          }
        }
      } else {
        throw ConfigError(path.string() + ": unknown key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (cfg.topics.size() < 2) throw TooFewTopics(path.string() + ": at least 2 topics are required");
  if (cfg.length_min < cfg.min_segment) throw ConfigError("length_range minimum must be >= min_segment");
  return cfg;
}

std::vector<TopicModel> build_topics(const SynthConfig& config) {
  std::vector<TopicModel> topics;
  for (const auto& t : config.topics) {
    topics.push_back(make_topic(t.id, read_seed_lines(t.seed_text), config.generator_order, config.generator_alpha));
  }
  return topics;
}

RatedCorpus generate_corpus(const SynthConfig& config, std::uint64_t seed) {
  const auto topics = build_topics(config);
  if (topics.size() < 2) throw TooFewTopics("at least 2 topics are required");
  if (config.length_min < config.min_segment || config.length_min > config.length_max) {
    throw ConfigError("invalid length range");
  }
  RatedCorpus corpus;
  corpus.name = config.name;
  corpus.scheme = RatingScheme::TaldDerailment;

  SynthRng lengths(derive_seed(seed, 0xC0FFEE));
  std::size_t index = 0;
  for (int severity = 0; severity <= kMaxSeverity; ++severity) {
    const auto spec = DerailmentSpec::for_severity(severity, config.min_segment, config.p_max);
    for (std::size_t c = 0; c < config.counts_per_severity[static_cast<std::size_t>(severity)]; ++c, ++index) {
      const auto length = config.length_min + lengths.below(config.length_max - config.length_min + 1);
      auto t = generate_transcript(topics, spec, length, derive_seed(seed, index));
      char id[64];
      std::snprintf(id, sizeof id, "syn%llu-%04zu", static_cast<unsigned long long>(seed), index);
      t.id = id;
      corpus.transcripts.push_back(std::move(t));
    }
  }
  if (corpus.transcripts.empty()) throw EmptyCorpus("generator configuration requests no transcripts");
  return corpus;
}

}  // namespace cohertrace

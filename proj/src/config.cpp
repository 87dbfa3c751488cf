#include "weakhier/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

#include "weakhier/error.hpp"

namespace weakhier {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ValidationError("config '" + key + "': cannot parse '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ValidationError("config '" + key + "': expected true/false, got '" + value + "'");
}

// Every key with a reader and a writer, in canonical order.
struct Field {
  const char* key;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

#define WEAKHIER_SIZE(name) \
  Field { #name, [](Config& c, const std::string& v) { c.name = parse_number<std::size_t>(#name, v); }, \
          [](const Config& c) { return std::to_string(c.name); } }
#define WEAKHIER_REAL(name) \
  Field { #name, [](Config& c, const std::string& v) { c.name = parse_number<double>(#name, v); }, \
          [](const Config& c) { return fmt::format("{}", c.name); } }
#define WEAKHIER_TEXT(name) \
  Field { #name, [](Config& c, const std::string& v) { c.name = v; }, [](const Config& c) { return c.name; } }

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      WEAKHIER_SIZE(min_count),
      WEAKHIER_SIZE(min_token_length),
      WEAKHIER_SIZE(dim),
      WEAKHIER_SIZE(window),
      WEAKHIER_SIZE(negatives),
      WEAKHIER_SIZE(embed_epochs),
      WEAKHIER_REAL(embed_learning_rate),
      WEAKHIER_TEXT(pretrained_embeddings),
      WEAKHIER_SIZE(max_keywords),
      WEAKHIER_TEXT(keyword_scope),
      WEAKHIER_SIZE(em_max_iters),
      WEAKHIER_REAL(em_tol),
      WEAKHIER_SIZE(lm_order),
      WEAKHIER_REAL(lm_discount),
      WEAKHIER_REAL(alpha),
      WEAKHIER_SIZE(beta),
      WEAKHIER_SIZE(pseudo_length),
      WEAKHIER_SIZE(sequence_cap),
      WEAKHIER_TEXT(begin_words),
      WEAKHIER_TEXT(encoder),
      WEAKHIER_SIZE(hidden),
      WEAKHIER_SIZE(pretrain_epochs),
      WEAKHIER_SIZE(batch_size),
      WEAKHIER_REAL(learning_rate),
      WEAKHIER_REAL(selftrain_learning_rate),
      WEAKHIER_REAL(delta),
      WEAKHIER_REAL(gamma),
      WEAKHIER_SIZE(max_rounds),
      WEAKHIER_TEXT(mode),
      Field{"self_train", [](Config& c, const std::string& v) { c.self_train = parse_bool("self_train", v); },
            [](const Config& c) { return std::string(c.self_train ? "true" : "false"); }},
      Field{"seed", [](Config& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
            [](const Config& c) { return std::to_string(c.seed); }},
      Field{"threads", [](Config& c, const std::string& v) { c.threads = parse_number<int>("threads", v); },
            [](const Config& c) { return std::to_string(c.threads); }},
  };
  return f;
}

#undef WEAKHIER_SIZE
#undef WEAKHIER_REAL
#undef WEAKHIER_TEXT

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace

void Config::validate() const {
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must be in [0, 1]");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma must be in [0, 1]");
  require(beta >= 1, "beta must be >= 1");
  require(delta > 0.0, "delta must be > 0");
  require(dim >= 2, "dim must be >= 2");
  require(window >= 1, "window must be >= 1");
  require(min_token_length >= 1, "min_token_length must be >= 1");
  require(max_keywords >= 1, "max_keywords must be >= 1");
  require(keyword_scope == "siblings" || keyword_scope == "level", "keyword_scope must be siblings or level");
  require(em_tol >= 0.0, "em_tol must be >= 0");
  require(lm_order >= 1, "lm_order must be >= 1");
  require(lm_discount > 0.0 && lm_discount < 1.0, "lm_discount must be in (0, 1)");
  require(sequence_cap >= 1, "sequence_cap must be >= 1");
  require(begin_words == "movmf" || begin_words == "keywords", "begin_words must be movmf or keywords");
  require(encoder == "mean", "encoder must be mean");
  require(hidden >= 1, "hidden must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(selftrain_learning_rate > 0.0, "selftrain_learning_rate must be > 0");
  require(mode == "global" || mode == "greedy", "mode must be global or greedy");
  require(threads >= 1, "threads must be >= 1");
}

void Config::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields())
    if (key == f.key) return f.set(*this, value);
  throw ValidationError("unknown config key '" + key + "'");
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

std::string Config::hash() const { return fmt::format("{:016x}", std::hash<std::string>{}(to_text())); }

TokenizerConfig Config::tokenizer() const { return {true, min_token_length, min_count}; }

SkipGramOptions Config::skipgram() const {
  return {dim, window, negatives, embed_epochs, embed_learning_rate, seed, threads};
}

KeywordOptions Config::keywords() const {
  return {max_keywords, keyword_scope == "level" ? KeywordScope::kLevel : KeywordScope::kSiblings};
}

EmOptions Config::em() const {
  EmOptions o;
  o.max_iters = em_max_iters;
  o.tol = em_tol;
  o.seed = seed;
  o.parallel = threads > 1;
  return o;
}

TrainOptions Config::train(double mean_doc_length) const {
  TrainOptions o;
  const std::size_t length =
      pseudo_length ? pseudo_length : std::clamp<std::size_t>(std::size_t(std::lround(mean_doc_length)), 1, 200);
  o.pseudo = {beta, alpha, {length, sequence_cap},
              begin_words == "keywords" ? BeginWordMode::kKeywords : BeginWordMode::kMovMF, seed, threads > 1};
  o.pretrain = {pretrain_epochs, batch_size, learning_rate, seed};
  o.self.delta = delta;
  o.self.max_rounds = max_rounds;
  o.self.batch_size = batch_size;
  o.self.learning_rate = selftrain_learning_rate;
  o.self.seed = seed;
  o.self.parallel = threads > 1;
  o.gamma = gamma;
  o.hidden = hidden;
  o.global = mode == "global";
  o.self_train = self_train;
  o.seed = seed;
  return o;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  Config c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const auto body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    c.set(trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
  }
  return c;
}

void save_config(const std::filesystem::path& path, const Config& config) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << config.to_text();
}

}  // namespace weakhier

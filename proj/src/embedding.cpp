#include "weakhier/embedding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <omp.h>
#include <spdlog/spdlog.h>

#include "weakhier/error.hpp"
#include "weakhier/kernels.hpp"
#include "weakhier/vmf.hpp"

namespace weakhier {

namespace {

class NegativeSampler {
 public:
  explicit NegativeSampler(const Vocabulary& vocab) : cumulative_(vocab.size(), 0.0) {
    double acc = 0.0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      if (static_cast<TokenId>(i) != kOovToken)
        acc += std::pow(static_cast<double>(vocab.corpus_frequency(static_cast<TokenId>(i))), 0.75);
      cumulative_[i] = acc;
    }
    total_ = acc;
  }

  TokenId draw(Rng& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, total_)(rng);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return static_cast<TokenId>(it - cumulative_.begin());
  }

 private:
  std::vector<double> cumulative_;
  double total_ = 0.0;
};

struct SkipGramState {
  RowMatrix input;   // syn0
  RowMatrix output;  // syn1neg
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Trains on one document. Returns the number of in-vocabulary positions seen.
std::size_t train_document(const std::vector<TokenId>& tokens, SkipGramState& s, const NegativeSampler& sampler,
                           const SkipGramOptions& opt, double lr, Rng& rng, std::vector<double>& grad) {
  const std::size_t d = opt.dim;
  const auto n = static_cast<std::ptrdiff_t>(tokens.size());
  std::size_t seen = 0;
  for (std::ptrdiff_t pos = 0; pos < n; ++pos) {
    const TokenId center = tokens[static_cast<std::size_t>(pos)];
    if (center == kOovToken) continue;
    ++seen;
    const auto shrink = static_cast<std::ptrdiff_t>(rng() % opt.window);
    const auto reach = static_cast<std::ptrdiff_t>(opt.window) - shrink;
    for (std::ptrdiff_t c = pos - reach; c <= pos + reach; ++c) {
      if (c == pos || c < 0 || c >= n) continue;
      const TokenId ctx = tokens[static_cast<std::size_t>(c)];
      if (ctx == kOovToken) continue;
      auto in = s.input.row(static_cast<std::size_t>(ctx));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = 0; k <= opt.negatives; ++k) {
        TokenId target = center;
        double label = 1.0;
        if (k > 0) {
          target = sampler.draw(rng);
          if (target == center) continue;
          label = 0.0;
        }
        auto out = s.output.row(static_cast<std::size_t>(target));
        const double g = (label - sigmoid(dot(in, out))) * lr;
        for (std::size_t j = 0; j < d; ++j) grad[j] += g * out[j];
        for (std::size_t j = 0; j < d; ++j) out[j] += g * in[j];
      }
      for (std::size_t j = 0; j < d; ++j) in[j] += grad[j];
    }
  }
  return seen;
}

}  // namespace

EmbeddingTable train_skipgram(const Corpus& corpus, const SkipGramOptions& opt) {
  if (corpus.documents.empty()) throw ValidationError("train_skipgram: empty corpus");
  if (opt.dim < 2) throw ValidationError("train_skipgram: dimension must be >= 2");
  if (opt.window < 1) throw ValidationError("train_skipgram: window must be >= 1");
  const auto& vocab = corpus.vocabulary;
  const std::size_t v = vocab.size(), d = opt.dim;

  Rng init_rng(opt.seed);
  std::uniform_real_distribution<double> unif(-0.5 / double(d), 0.5 / double(d));
  SkipGramState state{RowMatrix(v, d), RowMatrix(v, d, 0.0)};
  for (double& x : state.input.data) x = unif(init_rng);

  EmbeddingTable table;
  table.words = vocab.words();
  if (opt.epochs == 0) {
    table.vectors = std::move(state.input);
    return table;
  }

  const NegativeSampler sampler(vocab);
  const double total_words = double(vocab.total_tokens() - vocab.corpus_frequency(kOovToken)) * double(opt.epochs) + 1.0;
  const auto lr_at = [&](double processed) { return opt.learning_rate * std::max(1e-4, 1.0 - processed / total_words); };

  if (opt.threads <= 1) {
    Rng rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<double> grad(d);
    double processed = 0.0;
    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch)
      for (const auto& doc : corpus.documents)
        processed += double(train_document(doc.tokens, state, sampler, opt, lr_at(processed), rng, grad));
  } else {
    spdlog::info("train_skipgram: {} threads, lock-free updates (non-deterministic)", opt.threads);
    std::atomic<std::size_t> processed{0};
    const auto ndocs = static_cast<std::ptrdiff_t>(corpus.documents.size());
    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
#pragma omp parallel num_threads(opt.threads)
      {
        Rng rng(opt.seed + 7919ULL * static_cast<std::uint64_t>(omp_get_thread_num() + 1) + epoch);
        std::vector<double> grad(d);
#pragma omp for schedule(dynamic, 16)
        for (std::ptrdiff_t i = 0; i < ndocs; ++i) {
          const double lr = lr_at(double(processed.load(std::memory_order_relaxed)));
          processed += train_document(corpus.documents[static_cast<std::size_t>(i)].tokens, state, sampler, opt, lr,
                                      rng, grad);
        }
      }
    }
  }
  table.vectors = std::move(state.input);
  return table;
}

EmbeddingTable normalize_to_sphere(EmbeddingTable table, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = table.dim();
  std::vector<double> e0(d, 0.0);
  e0[0] = 1.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto row = table.vectors.row(i);
    if (normalize_in_place(row) == 0.0) {
      if (i != static_cast<std::size_t>(kOovToken))
        spdlog::warn("normalize_to_sphere: zero vector for '{}' replaced by a random direction",
                     i < table.words.size() ? table.words[i] : std::to_string(i));
      auto v = sample_vmf({e0, 0.0}, rng);
      std::copy(v.begin(), v.end(), row.begin());
    }
  }
  table.normalized = true;
  return table;
}

std::vector<Neighbor> nearest_words(const EmbeddingTable& table, std::span<const double> query, std::size_t k,
                                    const std::unordered_set<std::string>& exclude, bool parallel) {
  if (!table.normalized) throw ValidationError("nearest_words: table must be normalized");
  if (query.size() != table.dim()) throw ValidationError("nearest_words: query dimension mismatch");
  if (k == 0) return {};
  std::vector<double> scores(table.size());
  if (parallel) kernels::cosine_scores_parallel(table.vectors, query, scores);
  else kernels::cosine_scores_serial(table.vectors, query, scores);
  const double qn = norm(query);
  if (qn > 0.0)
    for (double& s : scores) s /= qn;

  std::vector<TokenId> candidates;
  candidates.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i)
    if (static_cast<TokenId>(i) != kOovToken && !exclude.contains(table.words[i]))
      candidates.push_back(static_cast<TokenId>(i));
  const auto better = [&](TokenId a, TokenId b) {
    const double sa = scores[std::size_t(a)], sb = scores[std::size_t(b)];
    if (sa != sb) return sa > sb;
    return table.words[std::size_t(a)] < table.words[std::size_t(b)];
  };
  const std::size_t take = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                    better);
  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const auto id = candidates[i];
    out.push_back({id, table.words[std::size_t(id)], scores[std::size_t(id)]});
  }
  return out;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out.precision(17);
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.words[i];
    for (double x : table.vectors.row(i)) out << ' ' << x;
    out << '\n';
  }
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embeddings " + path.string());
  EmbeddingTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<double> values;
    double x = 0.0;
    while (ls >> x) values.push_back(x);
    if (!ls.eof() || values.empty())
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed embedding line");
    if (table.vectors.cols == 0) table.vectors.cols = values.size();
    if (values.size() != table.vectors.cols)
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": dimension mismatch");
    table.words.push_back(word);
    table.vectors.data.insert(table.vectors.data.end(), values.begin(), values.end());
    ++table.vectors.rows;
  }
  if (table.words.empty()) throw ParseError("empty embedding file " + path.string());
  return table;
}

EmbeddingTable align_to_vocabulary(const EmbeddingTable& loaded, const Vocabulary& vocab, std::uint64_t seed) {
  std::unordered_map<std::string, std::size_t> rows;
  for (std::size_t i = 0; i < loaded.words.size(); ++i) rows.emplace(loaded.words[i], i);
  Rng rng(seed);
  const std::size_t d = loaded.dim();
  std::vector<double> e0(d, 0.0);
  e0[0] = 1.0;
  EmbeddingTable out;
  out.words = vocab.words();
  out.vectors = RowMatrix(vocab.size(), d);
  std::size_t missing = 0;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    auto dst = out.vectors.row(i);
    if (auto it = rows.find(out.words[i]); it != rows.end()) {
      auto src = loaded.vectors.row(it->second);
      std::copy(src.begin(), src.end(), dst.begin());
    } else {
      if (static_cast<TokenId>(i) != kOovToken) ++missing;
      auto v = sample_vmf({e0, 0.0}, rng);
      std::copy(v.begin(), v.end(), dst.begin());
    }
  }
  if (missing > 0) spdlog::warn("align_to_vocabulary: {} words missing from the embedding file", missing);
  return out;
}

}  // namespace weakhier

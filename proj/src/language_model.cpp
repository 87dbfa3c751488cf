#include "weakhier/language_model.hpp"

#include <algorithm>
#include <map>

#include "weakhier/error.hpp"

namespace weakhier {

TokenId LanguageModel::sample_next(std::span<const TokenId> context, Rng& rng, std::vector<double>& scratch) const {
  next_distribution(context, scratch);
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  TokenId last_positive = kOovToken;
  for (std::size_t i = 0; i < scratch.size(); ++i) {
    if (scratch[i] <= 0.0) continue;
    last_positive = static_cast<TokenId>(i);
    u -= scratch[i];
    if (u < 0.0) return last_positive;
  }
  return last_positive;  // rounding leftover lands on the last word with mass
}

std::size_t NgramModel::ContextHash::operator()(const std::vector<TokenId>& v) const noexcept {
  std::size_t h = v.size();
  for (TokenId t : v) h ^= std::hash<TokenId>{}(t) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

NgramModel NgramModel::train(const Corpus& corpus, std::size_t order, double discount) {
  if (corpus.documents.empty()) throw ValidationError("train_language_model: empty corpus");
  if (order < 1) throw ValidationError("train_language_model: order must be >= 1");
  if (!(discount > 0.0 && discount < 1.0)) throw ValidationError("train_language_model: discount must be in (0,1)");

  NgramModel lm;
  lm.order_ = order;
  lm.vocab_size_ = corpus.vocabulary.size();
  lm.discount_ = discount;
  lm.tables_.resize(order);

  // Ordered maps while counting keep the continuation lists deterministic.
  std::vector<std::map<std::vector<TokenId>, std::map<TokenId, std::size_t>>> counts(order);
  for (const auto& doc : corpus.documents) {
    const auto& t = doc.tokens;
    std::size_t seg_start = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] == kOovToken) {
        seg_start = i + 1;
        continue;
      }
      for (std::size_t k = 0; k < order && k <= i - seg_start; ++k) {
        std::vector<TokenId> ctx(t.begin() + static_cast<std::ptrdiff_t>(i - k), t.begin() + static_cast<std::ptrdiff_t>(i));
        ++counts[k][std::move(ctx)][t[i]];
      }
    }
  }
  bool any = false;
  for (std::size_t k = 0; k < order; ++k)
    for (auto& [ctx, next] : counts[k]) {
      Continuations c;
      for (auto [tok, n] : next) {
        c.next.emplace_back(tok, n);
        c.total += n;
      }
      any = any || c.total > 0;
      lm.tables_[k].emplace(ctx, std::move(c));
    }
  if (!any) throw ValidationError("train_language_model: corpus has no in-vocabulary tokens");
  return lm;
}

void NgramModel::next_distribution(std::span<const TokenId> context, std::vector<double>& out) const {
  out.assign(vocab_size_, 0.0);
  const double real_words = double(vocab_size_ - 1);
  for (std::size_t i = 0; i < vocab_size_; ++i)
    if (static_cast<TokenId>(i) != kOovToken) out[i] = 1.0 / real_words;

  // Contexts containing OOV were never counted; use the suffix after the last OOV.
  std::size_t usable = std::min(context.size(), order_ - 1);
  for (std::size_t j = 0; j < usable; ++j)
    if (context[context.size() - 1 - j] == kOovToken) {
      usable = j;
      break;
    }

  std::vector<TokenId> ctx;
  for (std::size_t k = 0; k <= usable; ++k) {
    ctx.assign(context.end() - static_cast<std::ptrdiff_t>(k), context.end());
    const auto it = tables_[k].find(ctx);
    if (it == tables_[k].end() || it->second.total == 0) continue;
    const auto& c = it->second;
    const double total = double(c.total);
    const double backoff = discount_ * double(c.next.size()) / total;
    for (double& p : out) p *= backoff;
    for (auto [tok, n] : c.next) out[std::size_t(tok)] += std::max(double(n) - discount_, 0.0) / total;
  }
}

std::size_t NgramModel::count(std::span<const TokenId> context, TokenId next) const {
  if (context.size() >= order_) return 0;
  const auto it = tables_[context.size()].find(std::vector<TokenId>(context.begin(), context.end()));
  if (it == tables_[context.size()].end()) return 0;
  for (auto [tok, n] : it->second.next)
    if (tok == next) return n;
  return 0;
}

}  // namespace weakhier

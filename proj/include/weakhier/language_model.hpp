#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "weakhier/text.hpp"
#include "weakhier/vmf.hpp"

namespace weakhier {

/// Next-token model over vocabulary indices. The OOV index always gets zero
/// mass; every real word gets positive mass.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual std::size_t order() const = 0;
  virtual std::size_t vocab_size() const = 0;
  /// Fills `out` (size vocab_size()) with p(. | context); only the last
  /// order()-1 context tokens are consulted.
  virtual void next_distribution(std::span<const TokenId> context, std::vector<double>& out) const = 0;

  TokenId sample_next(std::span<const TokenId> context, Rng& rng, std::vector<double>& scratch) const;
};

/// Interpolated n-gram model with absolute discounting, backing off to a
/// uniform distribution below the unigram level.
class NgramModel final : public LanguageModel {
 public:
  static NgramModel train(const Corpus& corpus, std::size_t order, double discount = 0.75);

  std::size_t order() const override { return order_; }
  std::size_t vocab_size() const override { return vocab_size_; }
  void next_distribution(std::span<const TokenId> context, std::vector<double>& out) const override;

  /// Raw continuation count c(context, next); zero when unseen.
  std::size_t count(std::span<const TokenId> context, TokenId next) const;

 private:
  struct ContextHash {
    std::size_t operator()(const std::vector<TokenId>& v) const noexcept;
  };
  struct Continuations {
    std::size_t total = 0;
    std::vector<std::pair<TokenId, std::size_t>> next;
  };
  using Table = std::unordered_map<std::vector<TokenId>, Continuations, ContextHash>;

  std::size_t order_ = 3;
  std::size_t vocab_size_ = 0;
  double discount_ = 0.75;
  std::vector<Table> tables_;  // tables_[k]: contexts of length k
};

}  // namespace weakhier

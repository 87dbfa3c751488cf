#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace weakhier {

using TokenId = std::int32_t;

/// Index reserved for tokens that fell below the vocabulary count threshold.
inline constexpr TokenId kOovToken = 0;
inline constexpr std::string_view kOovString = "<unk>";

struct TokenizerConfig {
  bool lowercase = true;
  std::size_t min_token_length = 2;
  std::size_t min_count = 5;
};

/// Splits on non-alphanumerics, lowercases, drops short tokens.
std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config);

/// Bijective token <-> index map. Index 0 is always the OOV sentinel.
class Vocabulary {
 public:
  Vocabulary();

  /// Adds a word (or returns its existing index).
  TokenId add(std::string_view word);

  std::optional<TokenId> find(std::string_view word) const;
  TokenId lookup(std::string_view word) const;  // kOovToken if absent
  const std::string& word(TokenId id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return words_.size(); }

  std::uint64_t corpus_frequency(TokenId id) const { return corpus_freq_.at(static_cast<std::size_t>(id)); }
  std::uint64_t document_frequency(TokenId id) const { return doc_freq_.at(static_cast<std::size_t>(id)); }
  std::uint64_t total_tokens() const;
  std::size_t num_documents() const { return num_docs_; }

  /// Counts one tokenized document into the frequency tables.
  void count_document(const std::vector<TokenId>& tokens);

  /// Restores persisted counts for an existing entry.
  void set_frequencies(TokenId id, std::uint64_t corpus_freq, std::uint64_t doc_freq);
  void set_num_documents(std::size_t n) { num_docs_ = n; }

  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<std::uint64_t> corpus_freq_;
  std::vector<std::uint64_t> doc_freq_;
  std::size_t num_docs_ = 0;
};

struct Document {
  std::string id;
  std::string raw_text;
  std::vector<TokenId> tokens;
  /// Evaluation only. Training code never reads this field.
  std::optional<std::string> gold_label;
};

struct Corpus {
  std::vector<Document> documents;
  Vocabulary vocabulary;

  std::size_t size() const { return documents.size(); }
  std::optional<std::size_t> index_of(std::string_view doc_id) const;
};

struct RawRecord {
  std::string id;
  std::string text;
  std::optional<std::string> label;
};

/// Builds a corpus from in-memory records: tokenizes, thresholds by min_count.
Corpus build_corpus(const std::vector<RawRecord>& records, const TokenizerConfig& config);

/// Re-tokenizes new texts against an existing vocabulary (unknown words -> OOV).
std::vector<TokenId> encode_text(std::string_view text, const Vocabulary& vocab,
                                 const TokenizerConfig& config);

/// Reads line-delimited JSON records {id, text, label?}.
std::vector<RawRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, const std::vector<RawRecord>& records);

Corpus load_corpus(const std::filesystem::path& path, const TokenizerConfig& config);

/// Vocabulary persistence: one "word<TAB>corpus_freq<TAB>doc_freq" line per entry.
void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::filesystem::path& path);

/// Top-`count` tokens by tf-idf over `docs`, scored against the corpus document
/// frequencies in `vocab`. Ties: higher corpus frequency, then lexicographic.
std::vector<std::string> tfidf_keywords(const std::vector<const Document*>& docs,
                                        const Vocabulary& vocab, std::size_t count);

}  // namespace weakhier

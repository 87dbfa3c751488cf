#include "weakhier/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "weakhier/error.hpp"

namespace weakhier {

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= config.min_token_length) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(config.lowercase ? static_cast<char>(std::tolower(c)) : ch);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() { add(kOovString); }

TokenId Vocabulary::add(std::string_view word) {
  if (auto it = index_.find(std::string(word)); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(words_.size());
  words_.emplace_back(word);
  index_.emplace(std::string(word), id);
  corpus_freq_.push_back(0);
  doc_freq_.push_back(0);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  if (auto it = index_.find(std::string(word)); it != index_.end()) return it->second;
  return std::nullopt;
}

TokenId Vocabulary::lookup(std::string_view word) const { return find(word).value_or(kOovToken); }

std::uint64_t Vocabulary::total_tokens() const {
  return std::accumulate(corpus_freq_.begin(), corpus_freq_.end(), std::uint64_t{0});
}

void Vocabulary::count_document(const std::vector<TokenId>& tokens) {
  std::vector<TokenId> seen;
  for (TokenId t : tokens) {
    ++corpus_freq_.at(static_cast<std::size_t>(t));
    seen.push_back(t);
  }
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  for (TokenId t : seen) ++doc_freq_[static_cast<std::size_t>(t)];
  ++num_docs_;
}

void Vocabulary::set_frequencies(TokenId id, std::uint64_t corpus_freq, std::uint64_t doc_freq) {
  corpus_freq_.at(static_cast<std::size_t>(id)) = corpus_freq;
  doc_freq_.at(static_cast<std::size_t>(id)) = doc_freq;
}

std::optional<std::size_t> Corpus::index_of(std::string_view doc_id) const {
  for (std::size_t i = 0; i < documents.size(); ++i)
    if (documents[i].id == doc_id) return i;
  return std::nullopt;
}

Corpus build_corpus(const std::vector<RawRecord>& records, const TokenizerConfig& config) {
  if (records.empty()) throw ValidationError("empty corpus");

  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(records.size());
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> first_seen;
  for (const auto& r : records) {
    tokenized.push_back(tokenize(r.text, config));
    for (const auto& t : tokenized.back()) {
      auto [it, inserted] = counts.try_emplace(t, 0);
      if (inserted) first_seen.push_back(t);
      ++it->second;
    }
  }

  // Index assignment in first-occurrence order keeps ids reproducible.
  Corpus corpus;
  for (const auto& w : first_seen)
    if (counts[w] >= config.min_count) corpus.vocabulary.add(w);

  std::unordered_map<std::string, bool> ids;
  corpus.documents.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!ids.emplace(records[i].id, true).second)
      throw ParseError("duplicate document id '" + records[i].id + "'");
    Document doc;
    doc.id = records[i].id;
    doc.raw_text = records[i].text;
    doc.gold_label = records[i].label;
    doc.tokens.reserve(tokenized[i].size());
    for (const auto& t : tokenized[i]) doc.tokens.push_back(corpus.vocabulary.lookup(t));
    corpus.vocabulary.count_document(doc.tokens);
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

std::vector<TokenId> encode_text(std::string_view text, const Vocabulary& vocab,
                                 const TokenizerConfig& config) {
  std::vector<TokenId> out;
  for (const auto& t : tokenize(text, config)) out.push_back(vocab.lookup(t));
  return out;
}

std::vector<RawRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file " + path.string());
  std::vector<RawRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RawRecord r;
      r.id = j.at("id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      if (j.contains("label") && !j["label"].is_null()) r.label = j["label"].get<std::string>();
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    }
  }
  return records;
}

void write_records(const std::filesystem::path& path, const std::vector<RawRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::json j{{"id", r.id}, {"text", r.text}};
    if (r.label) j["label"] = *r.label;
    out << j.dump() << '\n';
  }
}

Corpus load_corpus(const std::filesystem::path& path, const TokenizerConfig& config) {
  auto records = read_records(path);
  if (records.empty()) throw ValidationError("empty corpus: " + path.string());
  return build_corpus(records, config);
}

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << vocab.num_documents() << '\n';
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    out << vocab.word(id) << '\t' << vocab.corpus_frequency(id) << '\t' << vocab.document_frequency(id)
        << '\n';
  }
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open vocabulary " + path.string());
  std::size_t ndocs = 0;
  std::string line;
  if (!(in >> ndocs) || !std::getline(in, line)) throw ParseError(path.string() + ": missing header");
  Vocabulary vocab;
  vocab.set_num_documents(ndocs);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string w;
    std::uint64_t cf = 0, df = 0;
    if (!(std::getline(ls, w, '\t') && ls >> cf >> df))
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed vocabulary entry");
    const auto id = vocab.add(w);
    if (static_cast<std::size_t>(id) != lineno - 2)
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": duplicate or misplaced entry");
    vocab.set_frequencies(id, cf, df);
  }
  return vocab;
}

std::vector<std::string> tfidf_keywords(const std::vector<const Document*>& docs,
                                        const Vocabulary& vocab, std::size_t count) {
  if (count == 0) throw ValidationError("tfidf_keywords: count must be >= 1");
  if (docs.empty()) throw ValidationError("tfidf_keywords: empty document set");

  std::unordered_map<TokenId, double> tf;
  for (const auto* d : docs)
    for (TokenId t : d->tokens)
      if (t != kOovToken) tf[t] += 1.0;

  const double n = static_cast<double>(std::max<std::size_t>(vocab.num_documents(), 1));
  struct Scored {
    TokenId id;
    double score;
  };
  std::vector<Scored> scored;
  scored.reserve(tf.size());
  for (auto [id, f] : tf) {
    const double df = static_cast<double>(std::max<std::uint64_t>(vocab.document_frequency(id), 1));
    scored.push_back({id, f * std::log(n / df)});
  }
  std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    const auto fa = vocab.corpus_frequency(a.id), fb = vocab.corpus_frequency(b.id);
    if (fa != fb) return fa > fb;
    return vocab.word(a.id) < vocab.word(b.id);
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < scored.size() && i < count; ++i) out.push_back(vocab.word(scored[i].id));
  return out;
}

}  // namespace weakhier

#include "weakhier/synthetic.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "weakhier/error.hpp"
#include "weakhier/vmf.hpp"

namespace weakhier {

namespace {

std::vector<double> axis_sum(std::size_t d, std::size_t a, std::optional<std::size_t> b) {
  std::vector<double> v(d, 0.0);
  v[a] = 1.0;
  if (b) v[*b] = 1.0;
  normalize_in_place(v);
  return v;
}

struct Topic {
  std::vector<std::string> words;
  std::vector<std::vector<double>> vectors;
  std::vector<double> zipf;
};

Topic make_topic(const std::string& prefix, std::size_t count, const std::vector<double>& mean, double kappa,
                 Rng& rng) {
  Topic t;
  for (std::size_t k = 0; k < count; ++k) {
    t.words.push_back(fmt::format("{}w{:02}", prefix, k));
    t.vectors.push_back(sample_vmf({mean, kappa}, rng));
    t.zipf.push_back(1.0 / std::sqrt(double(k + 1)));
  }
  return t;
}

// Draws one word from the union of topics, weighted by zipf * exp(s <theta, v>).
class TopicSampler {
 public:
  TopicSampler(const std::vector<const Topic*>& topics, const std::vector<double>& theta, double sharpness) {
    for (const auto* t : topics)
      for (std::size_t k = 0; k < t->words.size(); ++k) {
        words_.push_back(&t->words[k]);
        weights_.push_back(t->zipf[k] * std::exp(sharpness * dot(theta, t->vectors[k])));
      }
    dist_ = std::discrete_distribution<std::size_t>(weights_.begin(), weights_.end());
  }
  const std::string& operator()(Rng& rng) { return *words_[dist_(rng)]; }

 private:
  std::vector<const std::string*> words_;
  std::vector<double> weights_;
  std::discrete_distribution<std::size_t> dist_;
};

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& o) {
  if (o.supers < 2 || o.leaves_per_super < 2) throw ValidationError("synthetic corpus needs >= 2 parents and leaves");
  if (o.keywords_per_leaf > o.words_per_leaf) throw ValidationError("more keywords than leaf words");
  if (o.min_length == 0 || o.max_length < o.min_length) throw ValidationError("bad synthetic document lengths");
  if (o.leaf_share + o.super_share > 1.0) throw ValidationError("topic shares exceed 1");

  Rng rng(o.seed);
  const std::size_t leaves = o.supers * o.leaves_per_super;
  const std::size_t d = o.supers + leaves;
  std::vector<Topic> super_topics, leaf_topics;
  std::vector<std::vector<double>> leaf_mean, super_mean;
  for (std::size_t s = 0; s < o.supers; ++s) {
    super_mean.push_back(axis_sum(d, s, std::nullopt));
    super_topics.push_back(make_topic(fmt::format("s{}", s), o.words_per_super, super_mean.back(), o.word_kappa, rng));
  }
  for (std::size_t l = 0; l < leaves; ++l) {
    leaf_mean.push_back(axis_sum(d, l / o.leaves_per_super, o.supers + l));
    leaf_topics.push_back(make_topic(fmt::format("t{}", l), o.words_per_leaf, leaf_mean.back(), o.word_kappa, rng));
  }
  Topic background;
  for (std::size_t k = 0; k < o.background_words; ++k) {
    background.words.push_back(fmt::format("bg{:03}", k));
    background.zipf.push_back(1.0 / double(k + 1));
  }
  std::discrete_distribution<std::size_t> bg_dist(background.zipf.begin(), background.zipf.end());

  std::vector<const Topic*> all_leaf, all_super;
  for (const auto& t : leaf_topics) all_leaf.push_back(&t);
  for (const auto& t : super_topics) all_super.push_back(&t);

  nlohmann::json tax{{"name", "root"}, {"children", nlohmann::json::array()}};
  for (std::size_t s = 0; s < o.supers; ++s) {
    nlohmann::json node{{"name", fmt::format("topic{}", s)}, {"children", nlohmann::json::array()}};
    for (std::size_t c = 0; c < o.leaves_per_super; ++c) {
      const std::size_t l = s * o.leaves_per_super + c;
      std::vector<std::string> kw(leaf_topics[l].words.begin(),
                                  leaf_topics[l].words.begin() + std::ptrdiff_t(o.keywords_per_leaf));
      node["children"].push_back({{"name", fmt::format("topic{}_{}", s, c)}, {"keywords", kw}});
    }
    tax["children"].push_back(node);
  }

  SyntheticCorpus out;
  out.taxonomy_json = tax.dump(2);
  std::uniform_int_distribution<std::size_t> length(o.min_length, o.max_length);
  std::uniform_real_distribution<double> unif;
  std::size_t next_id = 0;

  // `children` lists the leaves whose vocabularies the document draws from.
  const auto make_doc = [&](const std::vector<std::size_t>& children, const std::string& label,
                            bool general) {
    std::vector<TopicSampler> leaf_samplers, super_samplers;
    for (std::size_t l : children) {
      const auto theta = sample_vmf({leaf_mean[l], o.doc_kappa}, rng);
      leaf_samplers.emplace_back(all_leaf, theta, o.sharpness);
      super_samplers.emplace_back(all_super, theta, o.sharpness);
    }
    std::string text;
    const std::size_t n = length(rng);
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t which = children.size() == 1 ? 0 : std::size_t(rng() % children.size());
      const double u = unif(rng);
      const std::string& w = u < o.leaf_share                    ? leaf_samplers[which](rng)
                             : u < o.leaf_share + o.super_share ? super_samplers[which](rng)
                                                                 : background.words[bg_dist(rng)];
      text += (t ? " " : "") + w;
    }
    out.records.push_back({fmt::format("doc{:05}", next_id++), std::move(text), label});
    out.general.push_back(general);
  };

  for (std::size_t s = 0; s < o.supers; ++s)
    for (std::size_t c = 0; c < o.leaves_per_super; ++c)
      for (std::size_t i = 0; i < o.docs_per_leaf; ++i)
        make_doc({s * o.leaves_per_super + c}, fmt::format("topic{}_{}", s, c), false);
  // General documents cycle over the parents.
  for (std::size_t i = 0; i < o.general_documents; ++i) {
    const std::size_t s = i % o.supers;
    std::vector<std::size_t> kids;
    for (std::size_t c = 0; c < o.leaves_per_super; ++c) kids.push_back(s * o.leaves_per_super + c);
    make_doc(kids, fmt::format("topic{}", s), true);
  }
  return out;
}

}  // namespace weakhier

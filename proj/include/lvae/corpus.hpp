#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lvae/vocabulary.hpp"

namespace lvae {

struct PairRecord {
  std::size_t a = 0;
  std::size_t b = 0;
  int label = 0;
};

struct Corpus {
  std::vector<TokenSequence> sequences;
  std::vector<int> labels;  // empty when unlabeled
  std::vector<PairRecord> pairs;
  Vocabulary vocab;

  bool has_labels() const { return !labels.empty(); }
};

/// Vocabulary from whitespace-tokenized lines: ids by (-frequency, token),
/// tokens rarer than min_count replaced by <unk>.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& lines, int min_count = 1);

/// One sentence per line. Empty lines are skipped; the labels file is
/// `line_index<TAB>label` with 0-based indices into the nonempty lines.
/// Throws IoError, MalformedLabel, EmptyCorpus.
Corpus load_corpus(const std::string& path, const std::optional<std::string>& labels_path = {},
                   int min_count = 1);

/// Encodes a corpus file with an existing vocabulary (unknown words to <unk>).
std::vector<TokenSequence> encode_corpus_file(const std::string& path, const Vocabulary& vocab);

std::vector<int> load_labels(const std::string& path, std::size_t n_sequences);

struct SyntheticSpec {
  int classes = 4;
  int templates_per_class = 8;
  double noise = 0.05;
  std::size_t n = 2000;
  std::uint64_t seed = 1;
  int prefix_length = 3;  // shared by every template
  int body_min = 6;
  int body_max = 10;
  int words_per_class = 8;
  int slot_choices = 1;  // alternatives per body position
  int slot_groups = 0;   // >0: body position k follows the choice of group k mod slot_groups
  std::size_t n_pairs = 0;  // 0: n pairs
};

/// Sentences from K classes of token templates with per-position
/// substitution noise. With slot_choices > 1 each body position of a template
/// has that many alternative words. Every sentence picks one alternative per
/// position, or one per group of positions when slot_groups > 0. Pair labels: 0 same template, 1 same class with a
/// different template, 2 different class. Throws SpecInvalid.
struct SyntheticCorpus {
  Corpus corpus;
  std::vector<int> template_ids;
  std::vector<std::vector<std::string>> templates;  // first alternative at each position
  std::vector<std::vector<std::vector<std::string>>> template_slots;
};
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec);

/// Writes sentences, and labels (if any) as TSV; both atomically.
void write_corpus(const Corpus& corpus, const std::string& path,
                  const std::optional<std::string>& labels_path = {});

/// Write to a temporary sibling and rename over the destination.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace lvae

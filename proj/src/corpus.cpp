#include "lvae/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "lvae/errors.hpp"
#include "lvae/random.hpp"

namespace lvae {

namespace {

std::vector<std::vector<std::string>> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    auto words = split_whitespace(line);
    if (!words.empty()) lines.push_back(std::move(words));
  }
  if (in.bad()) throw Error(ErrorCode::IoError, "error reading '" + path + "'");
  return lines;
}

}  // namespace

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& lines, int min_count) {
  std::map<std::string, long> freq;
  for (const auto& l : lines)
    for (const auto& w : l) ++freq[w];
  std::vector<std::pair<std::string, long>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  bool rare = false;
  for (const auto& [w, c] : items) {
    const bool reserved = w == Vocabulary::kBosToken || w == Vocabulary::kEosToken ||
                          w == Vocabulary::kPadToken || w == Vocabulary::kUnkToken;
    if (c < min_count || reserved) {
      rare = true;
      continue;
    }
    vocab.add(w);
  }
  if (rare) vocab.add(Vocabulary::kUnkToken);
  return vocab;
}

std::vector<int> load_labels(const std::string& path, std::size_t n_sequences) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::vector<int> labels(n_sequences, -1);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    auto bad = [&] {
      return Error(ErrorCode::MalformedLabel,
                   path + ":" + std::to_string(line_no) + ": expected index<TAB>label");
    };
    if (tab == std::string::npos) throw bad();
    std::size_t index = 0;
    int label = 0;
    try {
      std::size_t used = 0;
      index = std::stoul(line.substr(0, tab), &used);
      if (used != tab) throw bad();
      const std::string rest = line.substr(tab + 1);
      label = std::stoi(rest, &used);
      if (used != rest.size() && rest.find_first_not_of(" \r", used) != std::string::npos) throw bad();
    } catch (const std::logic_error&) {
      throw bad();
    }
    if (index >= n_sequences || label < 0) throw bad();
    labels[index] = label;
  }
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0)
      throw Error(ErrorCode::MalformedLabel, "no label for sequence " + std::to_string(i));
  return labels;
}

Corpus load_corpus(const std::string& path, const std::optional<std::string>& labels_path,
                   int min_count) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw Error(ErrorCode::EmptyCorpus, "'" + path + "' has no sentences");
  Corpus c;
  c.vocab = build_vocabulary(lines, min_count);
  for (const auto& l : lines) c.sequences.push_back(c.vocab.encode(l));
  if (labels_path) c.labels = load_labels(*labels_path, c.sequences.size());
  return c;
}

std::vector<TokenSequence> encode_corpus_file(const std::string& path, const Vocabulary& vocab) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw Error(ErrorCode::EmptyCorpus, "'" + path + "' has no sentences");
  std::vector<TokenSequence> out;
  for (const auto& l : lines) out.push_back(vocab.encode(l));
  return out;
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw Error(ErrorCode::SpecInvalid, "need at least two classes");
  if (spec.n < static_cast<std::size_t>(spec.classes))
    throw Error(ErrorCode::SpecInvalid, "need at least one sentence per class");
  if (spec.templates_per_class < 1 || spec.words_per_class < 1 || spec.prefix_length < 0 ||
      spec.body_min < 1 || spec.body_max < spec.body_min || spec.slot_choices < 1 ||
      spec.slot_choices > spec.words_per_class || spec.slot_groups < 0)
    throw Error(ErrorCode::SpecInvalid, "invalid template shape");
  if (!(spec.noise >= 0.0 && spec.noise <= 1.0))
    throw Error(ErrorCode::SpecInvalid, "noise rate must be in [0, 1]");

  Rng rng(spec.seed);
  std::vector<std::string> words;
  std::vector<std::string> prefix;
  for (int i = 0; i < spec.prefix_length; ++i) {
    prefix.push_back("p" + std::to_string(i));
    words.push_back(prefix.back());
  }
  std::vector<std::vector<std::string>> pools(static_cast<std::size_t>(spec.classes));
  for (int c = 0; c < spec.classes; ++c)
    for (int w = 0; w < spec.words_per_class; ++w) {
      pools[c].push_back("c" + std::to_string(c) + "w" + std::to_string(w));
      words.push_back(pools[c].back());
    }

  SyntheticCorpus out;
  std::vector<int> template_class;
  for (int c = 0; c < spec.classes; ++c)
    for (int t = 0; t < spec.templates_per_class; ++t) {
      const int len = spec.body_min + static_cast<int>(rng.uniform_index(
                                          static_cast<std::size_t>(spec.body_max - spec.body_min + 1)));
      std::vector<std::vector<std::string>> slots;
      for (const auto& w : prefix) slots.push_back({w});
      for (int i = 0; i < len; ++i) {
        std::vector<std::string> alternatives;
        while (alternatives.size() < static_cast<std::size_t>(spec.slot_choices)) {
          const auto& w = pools[c][rng.uniform_index(pools[c].size())];
          if (std::find(alternatives.begin(), alternatives.end(), w) == alternatives.end())
            alternatives.push_back(w);
        }
        slots.push_back(std::move(alternatives));
      }
      std::vector<std::string> tmpl;
      for (const auto& a : slots) tmpl.push_back(a.front());
      out.templates.push_back(std::move(tmpl));
      out.template_slots.push_back(std::move(slots));
      template_class.push_back(c);
    }

  std::vector<std::vector<std::string>> sentences;
  std::vector<int> labels;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
    const int t = c * spec.templates_per_class +
                  static_cast<int>(rng.uniform_index(static_cast<std::size_t>(spec.templates_per_class)));
    auto s = out.templates[static_cast<std::size_t>(t)];
    if (spec.slot_choices > 1) {
      const auto& slots = out.template_slots[static_cast<std::size_t>(t)];
      const auto choices = static_cast<std::size_t>(spec.slot_choices);
      std::vector<std::size_t> group_choice(static_cast<std::size_t>(spec.slot_groups));
      for (auto& g : group_choice) g = rng.uniform_index(choices);
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (slots[k].size() < 2) continue;
        const std::size_t body = k - static_cast<std::size_t>(spec.prefix_length);
        s[k] = slots[k][group_choice.empty() ? rng.uniform_index(choices) : group_choice[body % group_choice.size()]];
      }
    }
    for (auto& w : s)
      if (rng.uniform() < spec.noise) w = words[rng.uniform_index(words.size())];
    sentences.push_back(std::move(s));
    labels.push_back(c);
    out.template_ids.push_back(t);
  }
  // Shuffle sentences, labels and template ids together.
  std::vector<std::size_t> order(spec.n);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  Corpus& corpus = out.corpus;
  corpus.vocab = build_vocabulary(sentences);
  std::vector<int> tmpl_ids;
  for (std::size_t i : order) {
    corpus.sequences.push_back(corpus.vocab.encode(sentences[i]));
    corpus.labels.push_back(labels[i]);
    tmpl_ids.push_back(out.template_ids[i]);
  }
  out.template_ids = std::move(tmpl_ids);

  const std::size_t n_pairs = spec.n_pairs ? spec.n_pairs : spec.n;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const int want = static_cast<int>(p % 3);
    const std::size_t a = rng.uniform_index(spec.n);
    // Rejection sampling for a partner with the requested relation.
    for (int attempt = 0; attempt < 10000; ++attempt) {
      const std::size_t b = rng.uniform_index(spec.n);
      if (b == a) continue;
      const bool same_t = out.template_ids[a] == out.template_ids[b];
      const bool same_c = corpus.labels[a] == corpus.labels[b];
      const int rel = same_t ? 0 : (same_c ? 1 : 2);
      if (rel == want) {
        corpus.pairs.push_back({a, b, rel});
        break;
      }
    }
  }
  return out;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorCode::IoError, "cannot rename onto '" + path + "': " + ec.message());
  }
}

void write_corpus(const Corpus& corpus, const std::string& path,
                  const std::optional<std::string>& labels_path) {
  std::ostringstream text;
  for (const auto& s : corpus.sequences) text << corpus.vocab.decode(s) << '\n';
  write_file_atomic(path, text.str());
  if (labels_path && corpus.has_labels()) {
    std::ostringstream tsv;
    for (std::size_t i = 0; i < corpus.labels.size(); ++i) tsv << i << '\t' << corpus.labels[i] << '\n';
    write_file_atomic(*labels_path, tsv.str());
  }
}

}  // namespace lvae

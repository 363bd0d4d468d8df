#include "kws/g2p.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "kws/error.hpp"

namespace kws::g2p {
namespace {

const std::array<const char*, kVocabSize> kTable = {
    "<pad>", "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",
    "DH",    "EH", "ER", "EY", "F",  "G",  "HH", "IH", "IY", "JH",
    "K",     "L",  "M",  "N",  "NG", "OW", "OY", "P",  "R",  "S",
    "SH",    "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"};

const std::unordered_map<std::string, int>& symbol_map() {
  static const std::unordered_map<std::string, int> m = [] {
    std::unordered_map<std::string, int> out;
    for (int i = 0; i < kVocabSize; ++i) out.emplace(kTable[i], i);
    return out;
  }();
  return m;
}

// Letter-to-sound fallback for out-of-lexicon words: one phoneme per
// letter, fixed table (see README).
const std::array<const char*, 26> kLetterFallback = {
    "AE", "B", "K", "D", "EH", "F", "G", "HH", "IH", "JH", "K", "L", "M",
    "N",  "OW", "P", "K", "R", "S", "T", "AH", "V", "W", "K", "Y", "Z"};

std::string strip_stress(const std::string& symbol) {
  if (!symbol.empty() && symbol.back() >= '0' && symbol.back() <= '2') {
    return symbol.substr(0, symbol.size() - 1);
  }
  return symbol;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

const std::array<const char*, kVocabSize>& phoneme_table() { return kTable; }

std::optional<int> phoneme_index(const std::string& symbol) {
  auto it = symbol_map().find(symbol);
  if (it == symbol_map().end()) return std::nullopt;
  return it->second;
}

const char* phoneme_symbol(int index) {
  if (index < 0 || index >= kVocabSize) throw Error("phoneme index out of range");
  return kTable[index];
}

std::string PhonemeSequence::to_string() const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += phoneme_symbol(ids[i]);
  }
  return out;
}

PhonemeSequence parse_phonemes(const std::string& text) {
  PhonemeSequence seq;
  std::istringstream ss(text);
  std::string sym;
  while (ss >> sym) {
    auto idx = phoneme_index(strip_stress(sym));
    if (!idx) throw Error("unknown phoneme symbol: " + sym);
    seq.ids.push_back(*idx);
  }
  return seq;
}

Lexicon Lexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open lexicon file: " + path);
  Lexicon lex;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind(";;;", 0) == 0) continue;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;  // blank line

    // `WORD(2)`-style alternate pronunciations: first one wins.
    bool alternate = false;
    const auto paren = word.find('(');
    if (paren != std::string::npos) {
      alternate = true;
      word = word.substr(0, paren);
    }

    PhonemeSequence seq;
    std::string sym;
    while (ss >> sym) {
      auto idx = phoneme_index(strip_stress(sym));
      if (!idx) {
        throw Error("lexicon " + path + " line " + std::to_string(line_no) +
                    ": unknown phoneme symbol '" + sym + "'");
      }
      if (*idx == kPadIndex) {
        throw Error("lexicon " + path + " line " + std::to_string(line_no) +
                    ": PAD symbol not allowed");
      }
      seq.ids.push_back(*idx);
    }
    if (seq.empty()) {
      throw Error("lexicon " + path + " line " + std::to_string(line_no) +
                  ": entry has no phonemes");
    }
    const std::string key = lower(word);
    if (key.empty()) {
      throw Error("lexicon " + path + " line " + std::to_string(line_no) +
                  ": empty word");
    }
    if (alternate || lex.entries_.count(key)) continue;
    lex.entries_.emplace(key, std::move(seq));
  }
  return lex;
}

Lexicon Lexicon::from_entries(
    const std::vector<std::pair<std::string, std::string>>& entries) {
  Lexicon lex;
  for (const auto& [word, phonemes] : entries) {
    PhonemeSequence seq = parse_phonemes(phonemes);
    if (seq.empty()) throw Error("lexicon entry has no phonemes: " + word);
    lex.entries_.emplace(lower(word), std::move(seq));
  }
  return lex;
}

std::optional<PhonemeSequence> Lexicon::lookup(const std::string& word) const {
  auto it = entries_.find(lower(word));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string normalize_text(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '\'') {
      if (pending_space && !out.empty()) out += ' ';
      pending_space = false;
      out += static_cast<char>(std::tolower(c));
    } else {
      pending_space = true;
    }
  }
  return out;
}

PhonemeSequence convert(const std::string& text, const Lexicon& lex,
                        bool* used_fallback) {
  if (used_fallback) *used_fallback = false;
  const std::string norm = normalize_text(text);
  if (norm.empty()) throw Error("g2p: text is empty after normalization");

  PhonemeSequence out;
  std::istringstream ss(norm);
  std::string word;
  while (ss >> word) {
    if (auto seq = lex.lookup(word)) {
      out.ids.insert(out.ids.end(), seq->ids.begin(), seq->ids.end());
      continue;
    }
    // Letter-to-sound fallback.
    bool any = false;
    for (char c : word) {
      if (c >= 'a' && c <= 'z') {
        auto idx = phoneme_index(kLetterFallback[c - 'a']);
        out.ids.push_back(*idx);
        any = true;
      }
    }
    if (any && used_fallback) *used_fallback = true;
  }
  if (out.empty()) throw Error("g2p: no pronounceable content in: " + text);
  return out;
}

double normalized_levenshtein(const PhonemeSequence& a, const PhonemeSequence& b) {
  if (a.empty() || b.empty()) {
    throw Error("normalized_levenshtein: empty sequence");
  }
  const size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a.ids[i - 1] == b.ids[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

}  // namespace kws::g2p

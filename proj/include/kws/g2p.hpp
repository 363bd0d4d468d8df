#pragma once

#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace kws::g2p {

// 39 stress-stripped ARPAbet phonemes; index 0 is the reserved PAD symbol.
inline constexpr int kPadIndex = 0;
inline constexpr int kNumPhonemes = 39;
inline constexpr int kVocabSize = kNumPhonemes + 1;

// Phoneme index -> symbol ("<pad>", "AA", ..., "ZH").
const std::array<const char*, kVocabSize>& phoneme_table();

// Symbol -> index; stress digits must already be stripped. Returns
// std::nullopt for unknown symbols.
std::optional<int> phoneme_index(const std::string& symbol);
const char* phoneme_symbol(int index);

struct PhonemeSequence {
  std::vector<int> ids;

  size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const PhonemeSequence&) const = default;
  std::string to_string() const;  // space-joined symbols
};

// Parse a space-separated symbol string ("F R EH N D"); stress digits allowed.
PhonemeSequence parse_phonemes(const std::string& text);

class Lexicon {
 public:
  // CMUdict-style file: `WORD  PH1 PH2 ...`, one entry per line, `;;;`
  // comments, stress digits on vowels permitted, `WORD(2)` alternates
  // ignored (first pronunciation wins). Keys are case-insensitive.
  static Lexicon load(const std::string& path);
  static Lexicon from_entries(
      const std::vector<std::pair<std::string, std::string>>& entries);

  std::optional<PhonemeSequence> lookup(const std::string& word) const;
  size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::string, PhonemeSequence> entries_;
};

// Lowercase, strip punctuation, collapse whitespace. Shared by the label
// rules so keyword/transcript comparison and G2P agree on tokenization.
std::string normalize_text(const std::string& text);

// Lexicon lookup word by word with a fixed letter-to-sound fallback for
// out-of-vocabulary words (single letter -> single phoneme; table in the
// README). `used_fallback`, when given, reports whether any word fell back,
// so OOV trials can be filtered.
PhonemeSequence convert(const std::string& text, const Lexicon& lex,
                        bool* used_fallback = nullptr);

// Edit distance with unit costs divided by max(len(a), len(b)).
double normalized_levenshtein(const PhonemeSequence& a, const PhonemeSequence& b);

}  // namespace kws::g2p

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "empaste/proposals.hpp"
#include "empaste/rng.hpp"

namespace empaste {

struct LexiconClass {
  ClassId id = 0;
  std::string name;
  std::vector<std::string> synonyms;
  std::string supercategory;
};

struct LabelLexicon {
  std::vector<LexiconClass> classes;
};

struct DistractorTable {
  std::map<std::string, std::vector<std::string>> by_supercategory;  // keys lowercase
};

LabelLexicon load_lexicon(const std::filesystem::path& path);
DistractorTable load_distractors(const std::filesystem::path& path);

// Rejects tables where a supercategory has no distractor, or where a
// distractor would itself be matched as a class mention.
void validate_caption_tables(const LabelLexicon& lexicon, const DistractorTable& table);

// Whole-word, case-insensitive replacement of class names and synonyms
// (with simple plural folding). Repeated mentions of the same word inside
// one caption get the same distractor.
class CaptionRewriter {
 public:
  CaptionRewriter(LabelLexicon lexicon, DistractorTable table);

  std::string rewrite(std::string_view caption, Rng& rng) const;

  // Number of class mentions the rewriter would replace.
  std::size_t count_mentions(std::string_view caption) const;

 private:
  struct Match {
    std::size_t begin = 0;  // byte range in the caption
    std::size_t end = 0;
    std::string key;        // folded source phrase
    std::size_t class_index = 0;
  };
  std::vector<Match> find_mentions(std::string_view caption) const;

  LabelLexicon lexicon_;
  DistractorTable table_;
  std::map<std::vector<std::string>, std::size_t> terms_;  // token sequence -> class index
  std::size_t longest_term_ = 1;
};

std::string rewrite_caption(std::string_view caption, const LabelLexicon& lexicon, const DistractorTable& table,
                            Rng& rng);

// Letter runs, the unit used for whole-word matching.
std::vector<std::string> caption_words(std::string_view caption);

struct CaptionLine {
  std::string image_id;
  std::string caption;
};
std::vector<CaptionLine> read_captions(const std::filesystem::path& path);
void write_captions(const std::filesystem::path& path, const std::vector<CaptionLine>& lines);

// ---- background pool ------------------------------------------------------

enum class BackgroundOrigin { Original, Generated };

struct BackgroundEntry {
  BackgroundOrigin origin = BackgroundOrigin::Original;
  std::string key;   // source image id (original) or caption group (generated)
  std::string path;

  friend bool operator==(const BackgroundEntry&, const BackgroundEntry&) = default;
};

struct BackgroundPool {
  std::vector<BackgroundEntry> entries;
};

struct OriginalBackground {
  std::string image_id;
  std::string path;
};

struct GeneratedBackground {
  std::string group;
  std::string path;
};

BackgroundPool assemble_background_pool(std::vector<OriginalBackground> originals,
                                        const std::vector<GeneratedBackground>& generated,
                                        const std::optional<std::map<std::string, double>>& ranking_scores,
                                        std::size_t top_k, std::size_t dup_factor);

std::vector<GeneratedBackground> read_generated_manifest(const std::filesystem::path& path);
std::map<std::string, double> read_ranking_scores(const std::filesystem::path& path);

void write_pool(const std::filesystem::path& path, const BackgroundPool& pool);
BackgroundPool read_pool(const std::filesystem::path& path);

}  // namespace empaste

#include "empaste/captions.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "empaste/text.hpp"

namespace empaste {

namespace {

using nlohmann::json;

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

bool is_letter(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

struct Word {
  std::size_t begin;
  std::size_t end;
  std::string lower;
};

std::vector<Word> split_words(std::string_view s) {
  std::vector<Word> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_letter(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && is_letter(s[j])) ++j;
    out.push_back({i, j, text::to_lower(s.substr(i, j - i))});
    i = j;
  }
  return out;
}

std::vector<std::string> term_tokens(std::string_view term) {
  std::vector<std::string> out;
  for (auto& w : split_words(term)) out.push_back(std::move(w.lower));
  return out;
}

// Candidate singular forms, exact form first.
std::vector<std::string> folds(const std::string& w) {
  std::vector<std::string> out{w};
  if (w.size() > 3 && w.ends_with("es")) out.push_back(w.substr(0, w.size() - 2));
  if (w.size() > 2 && w.ends_with('s')) out.push_back(w.substr(0, w.size() - 1));
  return out;
}

}  // namespace

LabelLexicon load_lexicon(const std::filesystem::path& path) {
  const json doc = load_json(path);
  LabelLexicon lex;
  try {
    for (const auto& c : doc.at("classes")) {
      LexiconClass cls;
      cls.id = c.at("id").get<ClassId>();
      cls.name = c.at("name").get<std::string>();
      cls.supercategory = text::to_lower(c.at("supercategory").get<std::string>());
      if (c.contains("synonyms")) cls.synonyms = c.at("synonyms").get<std::vector<std::string>>();
      if (std::find(cls.synonyms.begin(), cls.synonyms.end(), cls.name) == cls.synonyms.end())
        cls.synonyms.insert(cls.synonyms.begin(), cls.name);
      lex.classes.push_back(std::move(cls));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return lex;
}

DistractorTable load_distractors(const std::filesystem::path& path) {
  const json doc = load_json(path);
  DistractorTable table;
  try {
    for (const auto& [key, words] : doc.at("supercategories").items())
      table.by_supercategory[text::to_lower(key)] = words.get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return table;
}

void validate_caption_tables(const LabelLexicon& lexicon, const DistractorTable& table) {
  std::set<std::string> class_words;
  for (const auto& cls : lexicon.classes) {
    if (cls.synonyms.empty()) throw Error(ErrorCode::InvalidArgument, "class " + cls.name + " has no names");
    auto it = table.by_supercategory.find(cls.supercategory);
    if (it == table.by_supercategory.end() || it->second.empty())
      throw Error(ErrorCode::InvalidArgument, "supercategory '" + cls.supercategory + "' has no distractor words");
    for (const auto& syn : cls.synonyms)
      for (const auto& tok : term_tokens(syn)) class_words.insert(tok);
  }
  // A distractor overlaps if any of its words folds onto a class word.
  for (const auto& [super, words] : table.by_supercategory) {
    for (const auto& word : words) {
      for (const auto& tok : term_tokens(word)) {
        for (const auto& f : folds(tok)) {
          if (class_words.count(f))
            throw Error(ErrorCode::InvalidArgument,
                        "distractor '" + word + "' (" + super + ") overlaps the class lexicon");
        }
      }
    }
  }
}

CaptionRewriter::CaptionRewriter(LabelLexicon lexicon, DistractorTable table)
    : lexicon_(std::move(lexicon)), table_(std::move(table)) {
  validate_caption_tables(lexicon_, table_);
  for (std::size_t i = 0; i < lexicon_.classes.size(); ++i) {
    for (const auto& syn : lexicon_.classes[i].synonyms) {
      auto toks = term_tokens(syn);
      if (toks.empty()) continue;
      longest_term_ = std::max(longest_term_, toks.size());
      terms_.emplace(std::move(toks), i);
    }
  }
}

std::vector<CaptionRewriter::Match> CaptionRewriter::find_mentions(std::string_view caption) const {
  const std::vector<Word> words = split_words(caption);
  std::vector<Match> out;
  std::size_t i = 0;
  while (i < words.size()) {
    bool matched = false;
    for (std::size_t len = std::min(longest_term_, words.size() - i); len >= 1 && !matched; --len) {
      // Phrase words must be separated by plain spaces.
      bool contiguous = true;
      for (std::size_t k = i + 1; k < i + len && contiguous; ++k) {
        const auto gap = caption.substr(words[k - 1].end, words[k].begin - words[k - 1].end);
        contiguous = !gap.empty() && gap.find_first_not_of(' ') == std::string_view::npos;
      }
      if (!contiguous) continue;
      std::vector<std::string> key;
      for (std::size_t k = i; k + 1 < i + len; ++k) key.push_back(words[k].lower);
      for (const auto& last : folds(words[i + len - 1].lower)) {
        key.push_back(last);
        auto it = terms_.find(key);
        if (it != terms_.end()) {
          std::string joined;
          for (const auto& t : key) joined += (joined.empty() ? "" : " ") + t;
          out.push_back({words[i].begin, words[i + len - 1].end, std::move(joined), it->second});
          i += len;
          matched = true;
          break;
        }
        key.pop_back();
      }
    }
    if (!matched) ++i;
  }
  return out;
}

std::size_t CaptionRewriter::count_mentions(std::string_view caption) const { return find_mentions(caption).size(); }

std::string CaptionRewriter::rewrite(std::string_view caption, Rng& rng) const {
  const auto mentions = find_mentions(caption);
  std::map<std::string, std::string> chosen;
  std::string out;
  std::size_t cursor = 0;
  for (const auto& m : mentions) {
    out.append(caption.substr(cursor, m.begin - cursor));
    auto it = chosen.find(m.key);
    if (it == chosen.end()) {
      const auto& words = table_.by_supercategory.at(lexicon_.classes[m.class_index].supercategory);
      it = chosen.emplace(m.key, words[rng.below(words.size())]).first;
    }
    out.append(it->second);
    cursor = m.end;
  }
  out.append(caption.substr(cursor));
  return out;
}

std::string rewrite_caption(std::string_view caption, const LabelLexicon& lexicon, const DistractorTable& table,
                            Rng& rng) {
  return CaptionRewriter(lexicon, table).rewrite(caption, rng);
}

std::vector<std::string> caption_words(std::string_view caption) {
  std::vector<std::string> out;
  for (auto& w : split_words(caption)) out.push_back(std::move(w.lower));
  return out;
}

std::vector<CaptionLine> read_captions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<CaptionLine> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error(ErrorCode::MalformedFile, path.string() + ":" + std::to_string(lineno) + ": expected image_id<TAB>caption");
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

void write_captions(const std::filesystem::path& path, const std::vector<CaptionLine>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& l : lines) out << l.image_id << '\t' << l.caption << '\n';
}

// ---- background pool ------------------------------------------------------

BackgroundPool assemble_background_pool(std::vector<OriginalBackground> originals,
                                        const std::vector<GeneratedBackground>& generated,
                                        const std::optional<std::map<std::string, double>>& ranking_scores,
                                        std::size_t top_k, std::size_t dup_factor) {
  BackgroundPool pool;
  std::stable_sort(originals.begin(), originals.end(),
                   [](const auto& a, const auto& b) { return a.path < b.path; });
  for (const auto& o : originals)
    for (std::size_t d = 0; d < dup_factor; ++d)
      pool.entries.push_back({BackgroundOrigin::Original, o.image_id, o.path});

  std::map<std::string, std::vector<const GeneratedBackground*>> groups;
  for (const auto& g : generated) groups[g.group].push_back(&g);

  std::vector<BackgroundEntry> kept;
  for (auto& [group, members] : groups) {
    if (ranking_scores) {
      for (const auto* m : members)
        if (!ranking_scores->count(m->path))
          throw Error(ErrorCode::MissingScore, "no ranking score for generated image " + m->path);
      std::stable_sort(members.begin(), members.end(), [&](const auto* a, const auto* b) {
        const double sa = ranking_scores->at(a->path);
        const double sb = ranking_scores->at(b->path);
        return sa > sb || (sa == sb && a->path < b->path);
      });
      if (members.size() > top_k) members.resize(top_k);
    }
    for (const auto* m : members) kept.push_back({BackgroundOrigin::Generated, group, m->path});
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  pool.entries.insert(pool.entries.end(), kept.begin(), kept.end());
  return pool;
}

std::vector<GeneratedBackground> read_generated_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<GeneratedBackground> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty() || line[0] == '#') continue;
    const auto f = text::split(line, '\t');
    if (f.size() != 2)
      throw Error(ErrorCode::MalformedFile, path.string() + ":" + std::to_string(lineno) + ": expected group<TAB>path");
    out.push_back({std::string(f[0]), std::string(f[1])});
  }
  return out;
}

std::map<std::string, double> read_ranking_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::map<std::string, double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty() || line[0] == '#') continue;
    const auto f = text::split(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 2) throw Error(ErrorCode::MalformedFile, where + ": expected path<TAB>score");
    out[std::string(f[0])] = text::parse_double(f[1], where);
  }
  return out;
}

void write_pool(const std::filesystem::path& path, const BackgroundPool& pool) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& e : pool.entries)
    out << (e.origin == BackgroundOrigin::Original ? "original" : "generated") << '\t' << e.key << '\t' << e.path << '\n';
}

BackgroundPool read_pool(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  BackgroundPool pool;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 3) throw Error(ErrorCode::MalformedFile, where + ": expected origin<TAB>key<TAB>path");
    BackgroundEntry e;
    if (f[0] == "original") e.origin = BackgroundOrigin::Original;
    else if (f[0] == "generated") e.origin = BackgroundOrigin::Generated;
    else throw Error(ErrorCode::MalformedFile, where + ": unknown origin '" + std::string(f[0]) + "'");
    e.key = std::string(f[1]);
    e.path = std::string(f[2]);
    pool.entries.push_back(std::move(e));
  }
  return pool;
}

}  // namespace empaste

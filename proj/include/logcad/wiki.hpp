#pragma once

// Mines (phrase, context, description) entries from the first paragraphs of
// Wikipedia articles and a title -> description table of Wikidata items.
//
// Article dump format (pre-extracted text, not XML): an article starts with a
// line "@@ <title>", followed by its wikitext. Only the first blank-line
// delimited block of that text is used. Items are a TSV "title<TAB>description".

#include <algorithm>
#include <cstddef>
#include <future>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "logcad/data.hpp"

namespace logcad::wiki {

struct Article {
  std::string title;
  std::string text;
};

struct ExtractStats {
  std::size_t articles = 0;
  std::size_t sentences = 0;
  std::size_t links = 0;
  std::size_t malformed_links = 0;
  std::size_t anchor_mismatch = 0;
  std::size_t missing_item = 0;
  std::size_t empty_description = 0;
  std::size_t entries = 0;

  ExtractStats& operator+=(const ExtractStats& o) {
    articles += o.articles;
    sentences += o.sentences;
    links += o.links;
    malformed_links += o.malformed_links;
    anchor_mismatch += o.anchor_mismatch;
    missing_item += o.missing_item;
    empty_description += o.empty_description;
    entries += o.entries;
    return *this;
  }
};

inline std::vector<Article> read_articles(std::istream& in) {
  std::vector<Article> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("@@ ", 0) == 0) {
      out.push_back({line.substr(3), {}});
    } else if (!out.empty()) {
      out.back().text += line;
      out.back().text += '\n';
    }
  }
  return out;
}

// Lookup key shared by item titles and link targets: underscores as spaces,
// section anchors dropped, then tokenised.
inline std::string title_key(std::string_view title) {
  std::string t(title.substr(0, title.find('#')));
  std::replace(t.begin(), t.end(), '_', ' ');
  return join(tokenize(t));
}

// Later duplicates of a title replace earlier ones.
inline std::map<std::string, std::string> read_items(std::istream& in) {
  std::map<std::string, std::string> items;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string title = line.substr(0, tab);
    const std::string desc = tab == std::string::npos ? std::string() : line.substr(tab + 1);
    items[title_key(title)] = desc;
  }
  return items;
}

// First block of consecutive non-blank lines, joined with single spaces.
inline std::string first_paragraph(std::string_view text) {
  std::string out;
  bool started = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    const bool blank = line.find_first_not_of(" \t\r") == std::string_view::npos;
    if (blank) {
      if (started) break;
    } else {
      if (started) out += ' ';
      out += line;
      started = true;
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

// Drops "( ... )" spans (nesting-aware). Text inside [[ ]] is left intact so
// disambiguated targets such as [[Mercury (planet)|Mercury]] survive.
inline std::string remove_parenthesized(std::string_view text) {
  std::string out;
  int depth = 0;
  bool in_link = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!in_link && text.substr(i, 2) == "[[") {
      in_link = true;
      if (depth == 0) out += "[[";
      ++i;
      continue;
    }
    if (in_link && text.substr(i, 2) == "]]") {
      in_link = false;
      if (depth == 0) out += "]]";
      ++i;
      continue;
    }
    const char c = text[i];
    if (!in_link && c == '(') {
      ++depth;
      continue;
    }
    if (!in_link && c == ')' && depth > 0) {
      --depth;
      continue;
    }
    if (depth == 0) out += c;
  }
  return out;
}

// Splits after ". ", "! " or "? " occurring outside link markup.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  bool in_link = false;
  auto push = [&] {
    const auto b = current.find_first_not_of(' ');
    if (b != std::string::npos) {
      const auto e = current.find_last_not_of(' ');
      out.push_back(current.substr(b, e - b + 1));
    }
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text.substr(i, 2) == "[[") in_link = true;
    if (text.substr(i, 2) == "]]") in_link = false;
    const char c = text[i];
    current += c;
    if (!in_link && (c == '.' || c == '!' || c == '?') && i + 1 < text.size() && text[i + 1] == ' ') push();
  }
  push();
  return out;
}

struct Segment {
  bool is_link = false;
  std::string text;    // plain text, or anchor text for links
  std::string target;  // links only
};

// Parses a sentence into text and link segments. Malformed markup is kept
// as plain text (brackets dropped) and counted.
inline std::vector<Segment> parse_links(std::string_view sentence, std::size_t& malformed) {
  std::vector<Segment> segs;
  std::string text;
  auto flush_text = [&] {
    if (!text.empty()) segs.push_back({false, std::move(text), {}});
    text.clear();
  };
  std::size_t i = 0;
  while (i < sentence.size()) {
    if (sentence.substr(i, 2) != "[[") {
      text += sentence[i++];
      continue;
    }
    const auto close = sentence.find("]]", i + 2);
    const auto reopen = sentence.find("[[", i + 2);
    if (close == std::string_view::npos || (reopen != std::string_view::npos && reopen < close)) {
      ++malformed;
      i += 2;
      continue;
    }
    const std::string_view body = sentence.substr(i + 2, close - i - 2);
    const auto bar = body.find('|');
    std::string target(body.substr(0, bar));
    std::string anchor(bar == std::string_view::npos ? body : body.substr(bar + 1));
    i = close + 2;
    if (title_key(target).empty() || anchor.find('|') != std::string::npos) {
      ++malformed;
      text += anchor.substr(anchor.rfind('|') == std::string::npos ? 0 : anchor.rfind('|') + 1);
      continue;
    }
    flush_text();
    segs.push_back({true, std::move(anchor), std::move(target)});
  }
  flush_text();
  return segs;
}

inline std::vector<Entry> extract_article(const Article& article, const std::map<std::string, std::string>& items,
                                          ExtractStats& stats) {
  std::vector<Entry> out;
  ++stats.articles;
  const auto paragraph = remove_parenthesized(first_paragraph(article.text));
  for (const auto& sentence : split_sentences(paragraph)) {
    ++stats.sentences;
    const auto segs = parse_links(sentence, stats.malformed_links);
    for (std::size_t k = 0; k < segs.size(); ++k) {
      if (!segs[k].is_link) continue;
      ++stats.links;
      const auto anchor = tokenize(segs[k].text);
      const auto key = title_key(segs[k].target);
      if (anchor.empty() || join(anchor) != key) {
        ++stats.anchor_mismatch;
        continue;
      }
      const auto item = items.find(key);
      if (item == items.end()) {
        ++stats.missing_item;
        continue;
      }
      auto description = tokenize(item->second);
      if (description.empty()) {
        ++stats.empty_description;
        continue;
      }
      std::string context;
      for (std::size_t j = 0; j < segs.size(); ++j) {
        if (j == k) {
          context += ' ';
          context += kTargetMarker;
          context += ' ';
        } else {
          context += segs[j].text;
        }
      }
      if (auto e = make_entry(anchor, tokenize(context), std::move(description))) {
        out.push_back(std::move(*e));
        ++stats.entries;
      }
    }
  }
  return out;
}

// Entries are ordered by (title, sentence index, link index) regardless of
// how many worker threads are used.
inline std::vector<Entry> extract_wikipedia(std::vector<Article> articles,
                                            const std::map<std::string, std::string>& items, ExtractStats& stats,
                                            std::size_t threads = std::max(1u, std::thread::hardware_concurrency())) {
  std::stable_sort(articles.begin(), articles.end(),
                   [](const Article& a, const Article& b) { return a.title < b.title; });
  threads = std::max<std::size_t>(1, std::min(threads, articles.size()));
  const std::size_t chunk = articles.empty() ? 0 : (articles.size() + threads - 1) / threads;
  struct Part {
    std::vector<Entry> entries;
    ExtractStats stats;
  };
  std::vector<std::future<Part>> parts;
  for (std::size_t start = 0; start < articles.size(); start += chunk) {
    const std::size_t end = std::min(articles.size(), start + chunk);
    parts.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred, [&, start, end] {
      Part p;
      for (std::size_t i = start; i < end; ++i) {
        auto es = extract_article(articles[i], items, p.stats);
        p.entries.insert(p.entries.end(), std::make_move_iterator(es.begin()), std::make_move_iterator(es.end()));
      }
      return p;
    }));
  }
  std::vector<Entry> out;
  for (auto& f : parts) {
    auto p = f.get();
    stats += p.stats;
    out.insert(out.end(), std::make_move_iterator(p.entries.begin()), std::make_move_iterator(p.entries.end()));
  }
  return out;
}

struct Split {
  std::vector<Entry> train, valid, test;
};

// Phrase-disjoint split: distinct phrases are shuffled by seed, the first
// round(test_frac * n) go to test, the next round(valid_frac * n) to valid.
inline Split split_by_phrase(const std::vector<Entry>& entries, std::uint64_t seed, double valid_frac = 0.05,
                             double test_frac = 0.05) {
  std::vector<std::vector<std::string>> phrases;
  for (const auto& e : entries) phrases.push_back(e.phrase);
  std::sort(phrases.begin(), phrases.end());
  phrases.erase(std::unique(phrases.begin(), phrases.end()), phrases.end());
  Rng rng(seed);
  rng.shuffle(phrases);
  const auto n = static_cast<double>(phrases.size());
  const auto n_test = static_cast<std::size_t>(std::llround(test_frac * n));
  const auto n_valid = static_cast<std::size_t>(std::llround(valid_frac * n));
  std::map<std::vector<std::string>, int> assignment;
  for (std::size_t i = 0; i < phrases.size(); ++i)
    assignment[phrases[i]] = i < n_test ? 2 : (i < n_test + n_valid ? 1 : 0);
  Split s;
  for (const auto& e : entries) {
    switch (assignment[e.phrase]) {
      case 2: s.test.push_back(e); break;
      case 1: s.valid.push_back(e); break;
      default: s.train.push_back(e); break;
    }
  }
  return s;
}

}  // namespace logcad::wiki

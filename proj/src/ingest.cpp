#include "irgcn/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cctype>
#include <fstream>
#include <iostream>
#include <unordered_map>

namespace irgcn {

namespace {

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

std::optional<std::int64_t> to_int(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

template <typename Map>
std::optional<std::int64_t> int_attr(const Map& attrs, std::string_view key) {
  auto it = attrs.find(key);
  if (it == attrs.end()) return std::nullopt;
  return to_int(it->second);
}

template <typename Map>
std::string str_attr(const Map& attrs, std::string_view key) {
  auto it = attrs.find(key);
  return it == attrs.end() ? std::string{} : it->second;
}

bool istarts_with(std::string_view s, std::size_t pos, std::string_view prefix) {
  if (pos + prefix.size() > s.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[pos + i])) != prefix[i]) return false;
  }
  return true;
}

// Counts opening tags `<name>` or `<name ...>`, case-insensitive.
std::size_t count_open_tags(std::string_view html, std::string_view name) {
  std::size_t count = 0;
  for (std::size_t pos = html.find('<'); pos != std::string_view::npos; pos = html.find('<', pos + 1)) {
    if (!istarts_with(html, pos + 1, name)) continue;
    const std::size_t after = pos + 1 + name.size();
    if (after < html.size()) {
      const char c = html[after];
      if (c == '>' || c == '/' || std::isspace(static_cast<unsigned char>(c))) ++count;
    }
  }
  return count;
}

// Calls on_row for every `<row .../>` element, reading line by line.
template <typename F>
void stream_rows(const std::filesystem::path& path, F&& on_row) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string buffer;
  std::string line;
  while (std::getline(in, line)) {
    buffer += line;
    buffer += '\n';
    std::size_t consumed = 0;
    for (;;) {
      const auto start = buffer.find("<row", consumed);
      if (start == std::string::npos) {
        consumed = buffer.size();
        break;
      }
      const auto stop = buffer.find("/>", start);
      if (stop == std::string::npos) {
        consumed = start;
        break;
      }
      on_row(std::string_view(buffer).substr(start, stop + 2 - start));
      consumed = stop + 2;
    }
    buffer.erase(0, consumed);
  }
  if (in.bad()) throw IoError("read error on " + path.string());
}

}  // namespace

std::string decode_entities(std::string_view s) {
  static const std::unordered_map<std::string_view, std::string_view> named = {
      {"lt", "<"}, {"gt", ">"}, {"amp", "&"}, {"quot", "\""}, {"apos", "'"}, {"nbsp", "\xC2\xA0"}};
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    const auto semi = s.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out += s[i];
      continue;
    }
    const auto ent = s.substr(i + 1, semi - i - 1);
    if (!ent.empty() && ent[0] == '#') {
      std::uint32_t cp = 0;
      const bool hex = ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X');
      const auto digits = ent.substr(hex ? 2 : 1);
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), cp, hex ? 16 : 10);
      if (ec == std::errc() && ptr == digits.data() + digits.size() && !digits.empty() && cp <= 0x10FFFF) {
        append_utf8(out, cp);
        i = semi;
        continue;
      }
    } else if (auto it = named.find(ent); it != named.end()) {
      out += it->second;
      i = semi;
      continue;
    }
    out += s[i];
  }
  return out;
}

std::optional<std::map<std::string, std::string, std::less<>>> parse_row(std::string_view element) {
  if (!element.starts_with("<row")) return std::nullopt;
  std::map<std::string, std::string, std::less<>> attrs;
  std::size_t pos = 4;
  const std::size_t end = element.ends_with("/>") ? element.size() - 2 : element.size();
  while (pos < end) {
    while (pos < end && std::isspace(static_cast<unsigned char>(element[pos]))) ++pos;
    if (pos >= end) break;
    const auto eq = element.find('=', pos);
    if (eq == std::string_view::npos || eq >= end) return std::nullopt;
    auto name = element.substr(pos, eq - pos);
    while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back()))) name.remove_suffix(1);
    std::size_t q = eq + 1;
    while (q < end && std::isspace(static_cast<unsigned char>(element[q]))) ++q;
    if (q >= end || (element[q] != '"' && element[q] != '\'')) return std::nullopt;
    const char quote = element[q];
    const auto close = element.find(quote, q + 1);
    if (close == std::string_view::npos || close >= end) return std::nullopt;
    if (name.empty()) return std::nullopt;
    attrs.emplace(std::string(name), decode_entities(element.substr(q + 1, close - q - 1)));
    pos = close + 1;
  }
  return attrs;
}

std::string strip_tags(std::string_view html) {
  std::string out;
  out.reserve(html.size());
  bool in_tag = false;
  for (char c : html) {
    if (in_tag) {
      if (c == '>') in_tag = false;
    } else if (c == '<') {
      in_tag = true;
      out += ' ';
    } else {
      out += c;
    }
  }
  return out;
}

std::size_t word_count(std::string_view html) {
  const auto text = strip_tags(html);
  std::size_t words = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return words;
}

std::size_t paragraph_count(std::string_view html) {
  if (html.empty()) return 0;
  return std::max<std::size_t>(1, count_open_tags(html, "p"));
}

bool has_code(std::string_view html) { return count_open_tags(html, "code") > 0; }

std::optional<std::int64_t> parse_timestamp(std::string_view s) {
  // YYYY-MM-DDThh:mm:ss with optional .fff fraction
  if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
      s[13] != ':' || s[16] != ':') {
    return std::nullopt;
  }
  auto y = to_int(s.substr(0, 4));
  auto mo = to_int(s.substr(5, 2));
  auto d = to_int(s.substr(8, 2));
  auto h = to_int(s.substr(11, 2));
  auto mi = to_int(s.substr(14, 2));
  auto se = to_int(s.substr(17, 2));
  if (!y || !mo || !d || !h || !mi || !se) return std::nullopt;
  std::int64_t ms = 0;
  if (s.size() > 19) {
    if (s[19] != '.') return std::nullopt;
    auto frac = s.substr(20);
    if (frac.empty() || frac.size() > 9) return std::nullopt;
    auto f = to_int(frac);
    if (!f) return std::nullopt;
    double scale = 1000.0;
    for (std::size_t i = 0; i < frac.size(); ++i) scale /= 10.0;
    ms = static_cast<std::int64_t>(static_cast<double>(*f) * scale);
  }
  using namespace std::chrono;
  const year_month_day ymd{year{static_cast<int>(*y)}, month{static_cast<unsigned>(*mo)},
                           day{static_cast<unsigned>(*d)}};
  if (!ymd.ok() || *h > 23 || *mi > 59 || *se > 60) return std::nullopt;
  const auto tp = sys_days{ymd} + hours{*h} + minutes{*mi} + seconds{*se};
  return duration_cast<milliseconds>(tp.time_since_epoch()).count() + ms;
}

ParseResult parse_dump(const std::filesystem::path& posts_path,
                       const std::filesystem::path& users_path) {
  ParseResult result;
  stream_rows(posts_path, [&](std::string_view element) {
    auto attrs = parse_row(element);
    if (!attrs) {
      ++result.skipped_posts;
      return;
    }
    const auto id = int_attr(*attrs, "Id");
    const auto type = int_attr(*attrs, "PostTypeId");
    const auto created = parse_timestamp(str_attr(*attrs, "CreationDate"));
    if (!id || !type || !created) {
      ++result.skipped_posts;
      return;
    }
    if (*type != 1 && *type != 2) {
      ++result.ignored_posts;
      return;
    }
    RawPost p;
    p.id = *id;
    p.type = *type == 1 ? PostType::question : PostType::answer;
    p.creation_ts = *created;
    p.parent_id = int_attr(*attrs, "ParentId");
    if (p.type == PostType::answer && !p.parent_id) {
      ++result.skipped_posts;
      return;
    }
    if (p.type == PostType::question) p.accepted_answer_id = int_attr(*attrs, "AcceptedAnswerId");
    p.body = str_attr(*attrs, "Body");
    p.title = str_attr(*attrs, "Title");
    p.view_count = std::max<std::int64_t>(0, int_attr(*attrs, "ViewCount").value_or(0));
    p.comment_count = std::max<std::int64_t>(0, int_attr(*attrs, "CommentCount").value_or(0));
    p.owner_user_id = int_attr(*attrs, "OwnerUserId");
    result.posts.push_back(std::move(p));
  });
  stream_rows(users_path, [&](std::string_view element) {
    auto attrs = parse_row(element);
    const auto id = attrs ? int_attr(*attrs, "Id") : std::nullopt;
    if (!id) {
      ++result.skipped_users;
      return;
    }
    result.users.push_back({*id, str_attr(*attrs, "AboutMe")});
  });
  if (result.skipped_posts) {
    std::cerr << "warning: skipped " << result.skipped_posts << " malformed post rows\n";
  }
  if (result.skipped_users) {
    std::cerr << "warning: skipped " << result.skipped_users << " malformed user rows\n";
  }
  if (result.posts.empty()) throw EmptyInputError("no valid rows in " + posts_path.string());
  if (result.users.empty()) throw EmptyInputError("no valid rows in " + users_path.string());
  return result;
}

Dataset build_dataset(const std::vector<RawPost>& posts, const std::vector<RawUser>& users,
                      BuildStats* stats) {
  BuildStats local;
  std::unordered_map<std::int64_t, std::size_t> about_words;
  for (const auto& u : users) about_words[u.id] = word_count(u.about_me);

  std::unordered_map<std::int64_t, const RawPost*> questions;
  std::unordered_map<std::int64_t, std::vector<const RawPost*>> answers;
  for (const auto& p : posts) {
    if (p.type == PostType::question) questions[p.id] = &p;
  }
  for (const auto& p : posts) {
    if (p.type != PostType::answer) continue;
    if (!questions.contains(*p.parent_id)) {
      ++local.orphan_answers;
      continue;
    }
    answers[*p.parent_id].push_back(&p);
  }

  // Deleted users become unique synthetic authors that can never share a clique.
  auto author_of = [](const RawPost& p) { return p.owner_user_id.value_or(-p.id - 1); };
  auto about_of = [&](const RawPost& p) -> double {
    if (!p.owner_user_id) return 0.0;
    auto it = about_words.find(*p.owner_user_id);
    return it == about_words.end() ? 0.0 : static_cast<double>(it->second);
  };

  std::vector<std::int64_t> qids;
  qids.reserve(questions.size());
  for (const auto& [id, q] : questions) qids.push_back(id);
  std::sort(qids.begin(), qids.end());

  std::vector<TupleMeta> tuples;
  std::vector<std::int8_t> labels;
  std::vector<std::array<double, kFeatureCount>> rows;
  for (auto qid : qids) {
    const RawPost& q = *questions[qid];
    if (!q.accepted_answer_id) {
      ++local.dropped_no_accepted;
      continue;
    }
    auto& as = answers[qid];
    const bool accepted_present = std::any_of(as.begin(), as.end(), [&](const RawPost* a) {
      return a->id == *q.accepted_answer_id;
    });
    if (!accepted_present) {
      ++local.dropped_missing_accepted;
      continue;
    }
    if (as.size() < 2) {
      ++local.dropped_single_answer;
      continue;
    }
    ++local.questions_kept;
    auto ts_of = [&](const RawPost* a) { return std::max(a->creation_ts, q.creation_ts); };
    std::sort(as.begin(), as.end(), [&](const RawPost* a, const RawPost* b) {
      return std::pair(ts_of(a), a->id) < std::pair(ts_of(b), b->id);
    });
    const double q_par = static_cast<double>(paragraph_count(q.body));
    const double q_words = static_cast<double>(word_count(q.body));
    const double q_code = has_code(q.body) ? 1.0 : 0.0;
    const double title_words = static_cast<double>(word_count(q.title));
    for (std::size_t rank = 0; rank < as.size(); ++rank) {
      const RawPost& a = *as[rank];
      const auto a_ts = ts_of(&a);
      TupleMeta t{qid, a.id, author_of(a), author_of(q), a_ts, q.creation_ts};
      std::array<double, kFeatureCount> f{};
      f[kQuestionViews] = static_cast<double>(q.view_count);
      f[kQuestionComments] = static_cast<double>(q.comment_count);
      f[kAnswerComments] = static_cast<double>(a.comment_count);
      f[kLogTimeGap] = std::log1p(static_cast<double>(a_ts - q.creation_ts) / 1000.0);
      f[kArrivalRank] = static_cast<double>(rank + 1);
      f[kQuestionParagraphs] = q_par;
      f[kAnswerParagraphs] = static_cast<double>(paragraph_count(a.body));
      f[kQuestionWords] = q_words;
      f[kAnswerWords] = static_cast<double>(word_count(a.body));
      f[kQuestionCode] = q_code;
      f[kAnswerCode] = has_code(a.body) ? 1.0 : 0.0;
      f[kTitleWords] = title_words;
      f[kQuestionerAboutWords] = about_of(q);
      f[kAnswererAboutWords] = about_of(a);
      tuples.push_back(t);
      labels.push_back(a.id == *q.accepted_answer_id ? 1 : -1);
      rows.push_back(f);
    }
  }
  Matrix features(static_cast<Index>(rows.size()), kFeatureCount);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Index j = 0; j < kFeatureCount; ++j) features(static_cast<Index>(i), j) = rows[i][j];
  }
  if (stats) *stats = local;
  return Dataset(std::move(features), std::move(labels), std::move(tuples));
}

}  // namespace irgcn

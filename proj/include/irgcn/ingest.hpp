#pragma once

#include "irgcn/dataset.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace irgcn {

enum class PostType { question, answer };

struct RawPost {
  std::int64_t id = 0;
  PostType type = PostType::question;
  std::optional<std::int64_t> parent_id;
  std::optional<std::int64_t> accepted_answer_id;
  std::int64_t creation_ts = 0;  // UTC milliseconds
  std::string body;
  std::string title;
  std::int64_t view_count = 0;
  std::int64_t comment_count = 0;
  std::optional<std::int64_t> owner_user_id;
};

struct RawUser {
  std::int64_t id = 0;
  std::string about_me;
};

struct EmptyInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseResult {
  std::vector<RawPost> posts;
  std::vector<RawUser> users;
  std::size_t skipped_posts = 0;  // malformed rows
  std::size_t skipped_users = 0;
  std::size_t ignored_posts = 0;  // well-formed rows that are neither questions nor answers
};

/// Attribute map of one `<row .../>` element, values entity-decoded.
std::optional<std::map<std::string, std::string, std::less<>>> parse_row(std::string_view element);

std::string decode_entities(std::string_view s);
std::string strip_tags(std::string_view html);
std::size_t word_count(std::string_view html);
std::size_t paragraph_count(std::string_view html);
bool has_code(std::string_view html);
/// "YYYY-MM-DDThh:mm:ss[.fff]" as UTC milliseconds since the epoch.
std::optional<std::int64_t> parse_timestamp(std::string_view s);

/// Streams a Posts/Users dump pair. Malformed rows are skipped and counted.
ParseResult parse_dump(const std::filesystem::path& posts_path,
                       const std::filesystem::path& users_path);

struct BuildStats {
  std::size_t questions_kept = 0;
  std::size_t dropped_no_accepted = 0;
  std::size_t dropped_missing_accepted = 0;
  std::size_t dropped_single_answer = 0;
  std::size_t orphan_answers = 0;
};

/// Feature columns, in order.
enum Feature : Index {
  kQuestionViews,
  kQuestionComments,
  kAnswerComments,
  kLogTimeGap,
  kArrivalRank,
  kQuestionParagraphs,
  kAnswerParagraphs,
  kQuestionWords,
  kAnswerWords,
  kQuestionCode,
  kAnswerCode,
  kTitleWords,
  kQuestionerAboutWords,
  kAnswererAboutWords,
};

/// One tuple per answer of every question that has an accepted answer present
/// in the dump and at least two answers. Returns an unsplit dataset.
Dataset build_dataset(const std::vector<RawPost>& posts, const std::vector<RawUser>& users,
                      BuildStats* stats = nullptr);

}  // namespace irgcn

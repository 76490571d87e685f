#pragma once

// Helpers shared by the storage backends.

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "obk/error.hpp"
#include "obk/storage.hpp"

namespace obk::storage_detail {

inline constexpr std::string_view kFileMetaName = "obk-meta.json";
inline constexpr std::string_view kRelationalDbName = "obk.sqlite3";

std::unique_ptr<Repository> create_file_store(const std::filesystem::path& root, RepositoryOptions options);
std::unique_ptr<Repository> open_file_store(const std::filesystem::path& root, RepositoryOptions options);
std::unique_ptr<Repository> create_relational_store(const std::filesystem::path& root, RepositoryOptions options);
std::unique_ptr<Repository> open_relational_store(const std::filesystem::path& root, RepositoryOptions options);

// Throws InvalidValue listing the violations, if any.
void require_valid(const std::vector<std::string>& violations, std::string_view what);

// Checks blob count, sizes and digests against the comment's attachment list.
void verify_attachments(const Comment& comment, std::span<const std::string> contents);

// Prepares root for a new repository: creates it if absent, rejects a
// non-empty directory.
void prepare_new_root(const std::filesystem::path& root);

void require_writable(const Repository& repo);

// Sorts records into canonical (timestamp, id) order.
void sort_detail(RunDetail& detail);

}  // namespace obk::storage_detail

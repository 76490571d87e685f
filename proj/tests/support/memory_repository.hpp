#pragma once

// Map-backed Repository used as a fast stand-in for the real backends.

#include <map>
#include <string>

#include "obk/storage.hpp"

namespace obk::test {

class MemoryRepository final : public Repository {
 public:
  BackendId backend() const override { return BackendId::FileStore; }
  const std::filesystem::path& root() const override { return root_; }
  bool writable() const override { return true; }

  std::vector<std::string> list_partitions() const override;

  void begin_run(const RunHeader& header) override;
  RunHeader end_run(std::string_view partition, std::uint64_t run_number, RunStatus status,
                    std::uint64_t num_events, Timestamp end_time) override;
  RunHeader force_close(std::string_view partition, std::uint64_t run_number) override;

  std::uint64_t append_mrs(std::string_view partition, std::uint64_t run_number, const MrsMessage& m) override;
  std::uint64_t append_is(std::string_view partition, std::uint64_t run_number, const IsInfo& info) override;
  std::uint64_t append_comment(std::string_view partition, std::uint64_t run_number, const Comment& comment,
                               std::span<const std::string> contents) override;
  std::uint64_t append_orphan(std::string_view partition, const OrphanBody& body,
                              std::span<const std::string> contents = {}) override;

  std::optional<std::uint64_t> open_run(std::string_view partition) const override;
  std::optional<RunHeader> find_run_header(std::string_view partition, std::uint64_t run_number) const override;
  std::vector<RunHeader> list_run_headers(std::optional<std::string_view> partition = std::nullopt) const override;
  std::vector<std::uint64_t> list_run_numbers(std::string_view partition) const override;
  RunDetail get_run_detail(std::string_view partition, std::uint64_t run_number) const override;
  std::vector<OrphanRecord> list_orphans(std::string_view partition) const override;
  std::optional<StoredAttachment> get_attachment(std::string_view digest) const override;

  void put_user(const UserRecord& user) override { users_[user.username] = user; }
  std::optional<UserRecord> get_user(std::string_view username) const override;
  std::vector<UserRecord> list_users() const override;

 private:
  struct Run {
    RunDetail detail;
    std::uint64_t next_record = 1;
  };
  using Key = std::pair<std::string, std::uint64_t>;

  Run& run(std::string_view partition, std::uint64_t run_number);
  Run& open_for_append(std::string_view partition, std::uint64_t run_number);

  std::filesystem::path root_{"memory"};
  std::map<std::string, std::vector<OrphanRecord>> partitions_;
  std::map<Key, Run> runs_;
  std::map<std::string, StoredAttachment> blobs_;
  std::map<std::string, UserRecord> users_;
};

}  // namespace obk::test

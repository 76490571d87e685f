#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "obk/storage.hpp"

namespace obk {

// Argon2id cost; the encoded hash carries its own parameters so changing
// these only affects new hashes.
struct PasswordHashParams {
  std::uint64_t opslimit = 2;
  std::size_t memlimit_bytes = 64u << 20;
};

std::string hash_password(std::string_view password, const PasswordHashParams& params);
bool verify_password(std::string_view encoded_hash, std::string_view password);

// [A-Za-z0-9][A-Za-z0-9_.@-]{0,63}
bool valid_username(std::string_view name);

struct Session {
  std::string token;  // 32 lowercase hex digits (128 random bits)
  std::string username;
  Timestamp expires_at{};
};

class SessionStore {
 public:
  explicit SessionStore(std::chrono::seconds ttl) : ttl_(ttl) {}

  Session issue(std::string username);
  // Username of a live session; expired tokens are dropped.
  std::optional<std::string> lookup(std::string_view token);
  void revoke_user(std::string_view username);

 private:
  std::chrono::seconds ttl_;
  std::mutex mutex_;
  std::unordered_map<std::string, Session> sessions_;
};

// Verifies credentials against the repository's user table. Unknown users
// are checked against a dummy hash of the same cost as a wrong password.
class Authenticator {
 public:
  explicit Authenticator(PasswordHashParams params);
  std::optional<UserRecord> authenticate(const Repository& repo, std::string_view username,
                                         std::string_view password) const;
  const PasswordHashParams& params() const { return params_; }

 private:
  PasswordHashParams params_;
  std::string dummy_hash_;
};

}  // namespace obk

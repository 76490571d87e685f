#include "obk/auth.hpp"

#include <sodium.h>

#include <stdexcept>

#include "obk/error.hpp"

namespace obk {
namespace {

void ensure_sodium() {
  static const bool ready = [] { return sodium_init() >= 0; }();
  if (!ready) throw Error(ErrorCode::Io, "libsodium initialization failed");
}

}  // namespace

std::string hash_password(std::string_view password, const PasswordHashParams& params) {
  ensure_sodium();
  char out[crypto_pwhash_STRBYTES];
  if (crypto_pwhash_str(out, password.data(), password.size(), params.opslimit, params.memlimit_bytes) != 0) {
    throw Error(ErrorCode::Io, "password hashing failed (out of memory?)");
  }
  return out;
}

bool verify_password(std::string_view encoded_hash, std::string_view password) {
  ensure_sodium();
  const std::string hash(encoded_hash);
  return crypto_pwhash_str_verify(hash.c_str(), password.data(), password.size()) == 0;
}

bool valid_username(std::string_view name) {
  if (name.empty() || name.size() > 64) return false;
  for (std::size_t i = 0; i < name.size(); ++i) {
    const char c = name[i];
    const bool alnum = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    if (!alnum && (i == 0 || (c != '_' && c != '.' && c != '-' && c != '@'))) return false;
  }
  return true;
}

Session SessionStore::issue(std::string username) {
  ensure_sodium();
  unsigned char raw[16];
  randombytes_buf(raw, sizeof raw);
  char hex[sizeof raw * 2 + 1];
  sodium_bin2hex(hex, sizeof hex, raw, sizeof raw);
  Session s{hex, std::move(username),
            std::chrono::time_point_cast<std::chrono::milliseconds>(now_utc() + ttl_)};
  std::lock_guard guard(mutex_);
  sessions_[s.token] = s;
  return s;
}

std::optional<std::string> SessionStore::lookup(std::string_view token) {
  std::lock_guard guard(mutex_);
  const auto it = sessions_.find(std::string(token));
  if (it == sessions_.end()) return std::nullopt;
  if (it->second.expires_at <= now_utc()) {
    sessions_.erase(it);
    return std::nullopt;
  }
  return it->second.username;
}

void SessionStore::revoke_user(std::string_view username) {
  std::lock_guard guard(mutex_);
  std::erase_if(sessions_, [&](const auto& kv) { return kv.second.username == username; });
}

Authenticator::Authenticator(PasswordHashParams params)
    : params_(params), dummy_hash_(hash_password("obk-dummy-password", params)) {}

std::optional<UserRecord> Authenticator::authenticate(const Repository& repo, std::string_view username,
                                                      std::string_view password) const {
  const auto user = valid_username(username) ? repo.get_user(username) : std::nullopt;
  if (!user) {
    verify_password(dummy_hash_, password);
    return std::nullopt;
  }
  if (!verify_password(user->password_hash, password)) return std::nullopt;
  return user;
}

}  // namespace obk

#pragma once

// Run document format of the file backend (see docs/filestore-format.md).

#include <string>
#include <string_view>

#include "obk/storage.hpp"

namespace obk::storage_detail {

// Records are written in arrival (record id) order, comments by id.
std::string run_to_xml(const RunDetail& detail);

// Throws Error(Io) naming `origin` when the document is malformed.
RunDetail run_from_xml(std::string_view xml, std::string_view origin);

// Parses only the <header> element; `xml` may be a prefix of the document
// that ends anywhere after "</header>".
RunHeader header_from_xml(std::string_view xml, std::string_view origin);

std::string xml_escape_text(std::string_view text);

}  // namespace obk::storage_detail

#pragma once

#include <string>

namespace noboxlab {

// Reads a whole file into a string; throws the given error type's base
// (PersistenceError for write, IngestionError for read) on failure.
std::string read_file(const std::string& path);

// Writes via a temp file in the same directory plus rename, so readers never
// observe a partial file.
void write_file_atomic(const std::string& path, const std::string& content);

}

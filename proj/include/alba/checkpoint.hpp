#pragma once

#include <string>

#include "alba/hashio.hpp"
#include "alba/param_store.hpp"

namespace alba {

// "ALB1" container: little-endian, magic + u32 version + u32 entry count,
// then per entry u16-length name, u8 trainable, u8 rank, u32 dims, raw f32
// data; trailing CRC32 over everything before it.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParamStore& store, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

// Loads into an existing store built from a config. The name sets must match
// exactly; the error lists missing/extra names. Copies data and trainable
// flags.
void load_checkpoint_into(ParamStore& dst, const std::string& path);

// Shared by the adapter-pack container.
void serialize_entries(ByteWriter& w, const ParamStore& store);
ParamStore parse_entries(ByteReader& r);

// Copies values + flags from src into dst, requiring identical name sets and
// shapes. Throws NameSetError with the difference otherwise.
void copy_into_store(ParamStore& dst, const ParamStore& src, const std::string& context);

}  // namespace alba

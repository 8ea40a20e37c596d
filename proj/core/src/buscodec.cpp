#include "uvsim/buscodec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace uvsim::bus {

void RegisterMap::define(std::uint8_t addr, RegAccess access, std::uint8_t reset_value) {
  access_[addr] = access;
  regs_[addr] = reset_value;
}

bool RegisterMap::write(std::uint8_t addr, std::uint8_t value) {
  if (access_[addr] != RegAccess::read_write) {
    ++rejected_writes_;
    return false;
  }
  regs_[addr] = value;
  return true;
}

void RegisterMap::load(std::uint8_t addr, std::span<const std::uint8_t> bytes) {
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    regs_[static_cast<std::uint8_t>(addr + i)] = bytes[i];
  }
}

std::vector<std::uint8_t> spi_transaction(RegisterMap& chip, std::span<const std::uint8_t> mosi) {
  if (mosi.empty()) {
    throw std::invalid_argument("spi_transaction: empty transfer");
  }
  std::vector<std::uint8_t> miso(mosi.size(), 0x00);
  const bool is_read = (mosi[0] & kReadFlag) != 0;
  const std::uint8_t page = chip.high_page() ? 0x80 : 0x00;
  auto addr = static_cast<std::uint8_t>((mosi[0] & 0x7F) | page);
  for (std::size_t i = 1; i < mosi.size(); ++i, addr = static_cast<std::uint8_t>(((addr + 1) & 0x7F) | page)) {
    if (is_read) {
      miso[i] = chip.read(addr);
    } else {
      chip.write(addr, mosi[i]);
    }
  }
  return miso;
}

std::vector<std::uint8_t> SpiDevice::read_burst(std::uint8_t addr, std::size_t n) {
  std::vector<std::uint8_t> mosi(n + 1, 0x00);
  mosi[0] = static_cast<std::uint8_t>(addr | kReadFlag);
  auto miso = transfer(mosi);
  miso.erase(miso.begin());
  return miso;
}

namespace {

std::int16_t saturate16(double v) {
  if (std::isnan(v)) return 0;
  const double r = std::round(v);
  return static_cast<std::int16_t>(std::clamp(r, -32768.0, 32767.0));
}

std::int32_t saturate32(double v) {
  if (std::isnan(v)) return 0;
  const double r = std::round(v);
  return static_cast<std::int32_t>(std::clamp(r, -2147483648.0, 2147483647.0));
}

void put_be16(std::uint8_t* p, std::int16_t v) {
  const auto u = static_cast<std::uint16_t>(v);
  p[0] = static_cast<std::uint8_t>(u >> 8);
  p[1] = static_cast<std::uint8_t>(u & 0xFF);
}

std::int16_t get_be16(const std::uint8_t* p) {
  return static_cast<std::int16_t>(static_cast<std::uint16_t>((p[0] << 8) | p[1]));
}

std::int16_t get_le16(const std::uint8_t* p) {
  return static_cast<std::int16_t>(static_cast<std::uint16_t>((p[1] << 8) | p[0]));
}

void put_le32(std::uint8_t* p, std::int32_t v) {
  const auto u = static_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>((u >> (8 * i)) & 0xFF);
}

std::int32_t get_le32(const std::uint8_t* p) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return static_cast<std::int32_t>(u);
}

void put_be24(std::uint8_t* p, std::uint32_t v) {
  p[0] = static_cast<std::uint8_t>((v >> 16) & 0xFF);
  p[1] = static_cast<std::uint8_t>((v >> 8) & 0xFF);
  p[2] = static_cast<std::uint8_t>(v & 0xFF);
}

std::uint32_t get_be24(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 16) | (static_cast<std::uint32_t>(p[1]) << 8) | p[2];
}

}  // namespace

RegisterMap make_imu_chip() {
  RegisterMap m;
  m.define(imu::kSmplrtDiv, RegAccess::read_write, 0x00);
  m.define(imu::kConfig, RegAccess::read_write, 0x00);
  m.define(imu::kGyroConfig, RegAccess::read_write, 0x08);   // FS_SEL = 1, +-500 deg/s
  m.define(imu::kAccelConfig, RegAccess::read_write, 0x10);  // AFS_SEL = 2, +-8 g
  for (std::uint8_t a = imu::kAccelXoutH; a < imu::kAccelXoutH + imu::kBurstLength; ++a) {
    m.define(a, RegAccess::read_only, 0x00);
  }
  m.define(imu::kPwrMgmt1, RegAccess::read_write, 0x40);
  m.define(imu::kPwrMgmt2, RegAccess::read_write, 0x00);
  m.define(imu::kWhoAmI, RegAccess::read_only, imu::kWhoAmIValue);
  return m;
}

ImuRaw quantize_imu(const Vec3& accel, const Vec3& gyro, double temperature) {
  ImuRaw raw{};
  const double a_scale = imu::kAccelLsbPerG / imu::kStandardGravity;
  const double g_scale = imu::kGyroLsbPerDps * kRadToDeg;
  for (int i = 0; i < 3; ++i) {
    raw.accel[i] = saturate16(accel(i) * a_scale);
    raw.gyro[i] = saturate16(gyro(i) * g_scale);
  }
  raw.temp = saturate16((temperature - 273.15 - imu::kTempOffsetC) * imu::kTempLsbPerC);
  return raw;
}

std::array<std::uint8_t, imu::kBurstLength> pack_imu(const ImuRaw& raw) {
  std::array<std::uint8_t, imu::kBurstLength> b{};
  for (int i = 0; i < 3; ++i) put_be16(&b[2 * i], raw.accel[i]);
  put_be16(&b[6], raw.temp);
  for (int i = 0; i < 3; ++i) put_be16(&b[8 + 2 * i], raw.gyro[i]);
  return b;
}

void encode_imu(const Vec3& accel, const Vec3& gyro, double temperature, RegisterMap& map) {
  const auto block = pack_imu(quantize_imu(accel, gyro, temperature));
  map.load(imu::kAccelXoutH, block);
}

ImuSample decode_imu_burst(std::span<const std::uint8_t, imu::kBurstLength> b) {
  ImuSample s;
  const double a_scale = imu::kStandardGravity / imu::kAccelLsbPerG;
  const double g_scale = kDegToRad / imu::kGyroLsbPerDps;
  for (int i = 0; i < 3; ++i) {
    s.accel(i) = get_be16(&b[2 * i]) * a_scale;
    s.gyro(i) = get_be16(&b[8 + 2 * i]) * g_scale;
  }
  s.temperature = get_be16(&b[6]) / imu::kTempLsbPerC + imu::kTempOffsetC + 273.15;
  return s;
}

RegisterMap make_mag_chip() {
  RegisterMap m;
  m.define(mag::kWia, RegAccess::read_only, mag::kWiaValue);
  m.define(mag::kSt1, RegAccess::read_only, 0x00);
  for (std::uint8_t a = mag::kHxl; a < mag::kHxl + mag::kDataLength; ++a) {
    m.define(a, RegAccess::read_only, 0x00);
  }
  m.define(mag::kSt2, RegAccess::read_only, 0x10);  // BITM: 16-bit output
  m.define(mag::kCntl1, RegAccess::read_write, 0x16);
  return m;
}

void encode_mag(const Vec3& field_ut, RegisterMap& map) {
  std::array<std::uint8_t, mag::kDataLength> b{};
  for (int i = 0; i < 3; ++i) {
    const auto u = static_cast<std::uint16_t>(saturate16(field_ut(i) / mag::kMicroTeslaPerLsb));
    b[2 * i] = static_cast<std::uint8_t>(u & 0xFF);
    b[2 * i + 1] = static_cast<std::uint8_t>(u >> 8);
  }
  map.load(mag::kHxl, b);
  const std::uint8_t drdy = 0x01;
  map.load(mag::kSt1, std::span(&drdy, 1));
}

Vec3 decode_mag(std::span<const std::uint8_t, mag::kDataLength> b) {
  return Vec3(get_le16(&b[0]), get_le16(&b[2]), get_le16(&b[4])) * mag::kMicroTeslaPerLsb;
}

RegisterMap make_baro_chip() {
  RegisterMap m;
  m.set_high_page(true);
  m.define(baro::kId, RegAccess::read_only, baro::kIdValue);
  m.define(baro::kCtrlMeas, RegAccess::read_write, 0x00);
  m.define(baro::kConfig, RegAccess::read_write, 0x00);
  for (std::uint8_t a = baro::kPressMsb; a < baro::kPressMsb + baro::kDataLength; ++a) {
    m.define(a, RegAccess::read_only, 0x00);
  }
  return m;
}

void encode_baro(double pressure_pa, double temperature_k, RegisterMap& map) {
  auto u24 = [](double v) {
    if (std::isnan(v)) return 0u;
    return static_cast<std::uint32_t>(std::clamp(std::round(v), 0.0, 16777215.0));
  };
  std::array<std::uint8_t, baro::kDataLength> b{};
  put_be24(&b[0], u24(pressure_pa * baro::kPressureLsbPerPa));
  put_be24(&b[3], u24(temperature_k * baro::kTempLsbPerK));
  map.load(baro::kPressMsb, b);
}

BaroSample decode_baro(std::span<const std::uint8_t, baro::kDataLength> b) {
  return {get_be24(&b[0]) / baro::kPressureLsbPerPa, get_be24(&b[3]) / baro::kTempLsbPerK};
}

std::string_view to_string(GpsError e) {
  switch (e) {
    case GpsError::truncated: return "truncated frame";
    case GpsError::bad_sync: return "bad sync";
    case GpsError::bad_length: return "bad length";
    case GpsError::bad_checksum: return "checksum mismatch";
    case GpsError::unknown_message: return "unknown message";
  }
  return "unknown error";
}

std::array<std::uint8_t, 2> fletcher8(std::span<const std::uint8_t> bytes) {
  std::uint8_t a = 0, b = 0;
  for (const std::uint8_t x : bytes) {
    a = static_cast<std::uint8_t>(a + x);
    b = static_cast<std::uint8_t>(b + a);
  }
  return {a, b};
}

GpsFrame encode_gps(const GpsFix& fix) {
  GpsFrame f{};
  f[0] = gps::kSync1;
  f[1] = gps::kSync2;
  f[2] = gps::kClass;
  f[3] = gps::kId;
  f[4] = static_cast<std::uint8_t>(gps::kPayloadLength & 0xFF);
  f[5] = static_cast<std::uint8_t>(gps::kPayloadLength >> 8);
  std::uint8_t* p = &f[6];
  put_le32(p + 0, saturate32(fix.position.latitude_deg * 1e7));
  put_le32(p + 4, saturate32(fix.position.longitude_deg * 1e7));
  put_le32(p + 8, saturate32(fix.position.altitude_m * 1e3));
  for (int i = 0; i < 3; ++i) put_le32(p + 12 + 4 * i, saturate32(fix.v_e(i) * 1e2));
  const auto ck = fletcher8(std::span<const std::uint8_t>(&f[2], 4 + gps::kPayloadLength));
  f[6 + gps::kPayloadLength] = ck[0];
  f[7 + gps::kPayloadLength] = ck[1];
  return f;
}

GpsDecode decode_gps(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2) {
    if (!bytes.empty() && bytes[0] != gps::kSync1) return GpsError::bad_sync;
    return GpsError::truncated;
  }
  if (bytes[0] != gps::kSync1 || bytes[1] != gps::kSync2) {
    return GpsError::bad_sync;
  }
  if (bytes.size() < 6) {
    return GpsError::truncated;
  }
  const std::size_t len = bytes[4] | (static_cast<std::size_t>(bytes[5]) << 8);
  if (bytes.size() < 6 + len + 2) {
    return GpsError::truncated;
  }
  const auto ck = fletcher8(bytes.subspan(2, 4 + len));
  if (ck[0] != bytes[6 + len] || ck[1] != bytes[7 + len]) {
    return GpsError::bad_checksum;
  }
  if (bytes[2] != gps::kClass || bytes[3] != gps::kId) {
    return GpsError::unknown_message;
  }
  if (len != gps::kPayloadLength) {
    return GpsError::bad_length;
  }
  const std::uint8_t* p = bytes.data() + 6;
  GpsFix fix;
  fix.position.latitude_deg = get_le32(p + 0) * 1e-7;
  fix.position.longitude_deg = get_le32(p + 4) * 1e-7;
  fix.position.altitude_m = get_le32(p + 8) * 1e-3;
  for (int i = 0; i < 3; ++i) fix.v_e(i) = get_le32(p + 12 + 4 * i) * 1e-2;
  return fix;
}

std::vector<GpsFix> GpsStreamParser::feed(std::span<const std::uint8_t> bytes) {
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
  std::vector<GpsFix> out;
  std::size_t pos = 0;
  while (pos < buffer_.size()) {
    if (buffer_[pos] != gps::kSync1) {
      ++pos;
      continue;
    }
    // Only one message length is valid; do not wait for 64 KiB of garbage
    // announced by a corrupted length field.
    if (buffer_.size() - pos >= 6 && buffer_[pos + 1] == gps::kSync2 &&
        (buffer_[pos + 4] | (static_cast<std::size_t>(buffer_[pos + 5]) << 8)) != gps::kPayloadLength) {
      ++errors_;
      ++pos;
      continue;
    }
    const auto res = decode_gps(std::span<const std::uint8_t>(buffer_).subspan(pos));
    if (const auto* fix = std::get_if<GpsFix>(&res)) {
      out.push_back(*fix);
      pos += gps::kFrameLength;
    } else if (std::get<GpsError>(res) == GpsError::truncated) {
      break;
    } else {
      ++errors_;
      ++pos;
    }
  }
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos));
  return out;
}

double decode_pwm(double pulse_us) {
  if (std::isnan(pulse_us)) return 0.0;
  return std::clamp((pulse_us - kPwmMin) / static_cast<double>(kPwmMax - kPwmMin), 0.0, 1.0);
}

std::vector<double> decode_pwm(const PwmCommand& cmd) {
  std::vector<double> out;
  out.reserve(cmd.pulse_us.size());
  for (const auto p : cmd.pulse_us) out.push_back(decode_pwm(static_cast<double>(p)));
  return out;
}

std::uint16_t encode_pwm(double throttle) {
  const double t = std::isnan(throttle) ? 0.0 : std::clamp(throttle, 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(kPwmMin + t * (kPwmMax - kPwmMin)));
}

}  // namespace uvsim::bus

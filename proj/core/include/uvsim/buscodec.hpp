#pragma once

// Byte-level sensor bus emulation: register-map chips behind SPI-style
// transactions, a UBX-style binary GPS frame, and PWM command decoding.
// The layouts here are the wire contract; docs/formats.md mirrors them.

#include "uvsim/frames.hpp"
#include "uvsim/sensors.hpp"

#include <array>
#include <cstdint>
#include <mutex>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace uvsim::bus {

enum class RegAccess : std::uint8_t { unmapped, read_only, read_write };

/// 256-register chip image. Unmapped registers read as 0x00 and reject
/// writes, as do read-only registers; rejected writes are counted.
class RegisterMap {
 public:
  void define(std::uint8_t addr, RegAccess access, std::uint8_t reset_value = 0);

  std::uint8_t read(std::uint8_t addr) const { return regs_[addr]; }
  /// Bus-side write. Returns false (and counts) when the register is not writable.
  bool write(std::uint8_t addr, std::uint8_t value);
  RegAccess access(std::uint8_t addr) const { return access_[addr]; }

  /// Device-side update of a register block; bypasses access control.
  void load(std::uint8_t addr, std::span<const std::uint8_t> bytes);

  std::uint64_t rejected_writes() const { return rejected_writes_; }

  /// Chips whose registers live at 0x80..0xFF take a 7-bit SPI address and
  /// restore the top bit internally (the top bit of the command byte is the
  /// read flag).
  void set_high_page(bool on) { high_page_ = on; }
  bool high_page() const { return high_page_; }

 private:
  std::array<std::uint8_t, 256> regs_{};
  bool high_page_ = false;
  std::array<RegAccess, 256> access_{};
  std::uint64_t rejected_writes_ = 0;
};

/// Full-duplex transfer. mosi[0] is the 7-bit register address with bit 7
/// set for a read. Reads return one byte per clocked byte after the address,
/// auto-incrementing (wrapping within the page); writes store consecutive bytes and
/// answer 0x00. miso[0] is always 0x00. Throws std::invalid_argument on an
/// empty mosi.
std::vector<std::uint8_t> spi_transaction(RegisterMap& chip, std::span<const std::uint8_t> mosi);

inline constexpr std::uint8_t kReadFlag = 0x80;

/// Register map shared between the simulation (device side) and a driver
/// (bus side). Updates and transfers are serialized, so a burst read never
/// observes a half-written sample.
class SpiDevice {
 public:
  explicit SpiDevice(RegisterMap map) : map_(std::move(map)) {}
  SpiDevice(const SpiDevice&) = delete;
  SpiDevice& operator=(const SpiDevice&) = delete;

  std::vector<std::uint8_t> transfer(std::span<const std::uint8_t> mosi) {
    std::lock_guard lock(mutex_);
    return spi_transaction(map_, mosi);
  }

  template <class F>
  void update(F&& f) {
    std::lock_guard lock(mutex_);
    f(map_);
  }

  RegisterMap snapshot() const {
    std::lock_guard lock(mutex_);
    return map_;
  }

  /// Convenience: burst read of n bytes starting at addr.
  std::vector<std::uint8_t> read_burst(std::uint8_t addr, std::size_t n);

 private:
  mutable std::mutex mutex_;
  RegisterMap map_;
};

// --- IMU: MPU6000-style layout -------------------------------------------
namespace imu {
inline constexpr std::uint8_t kSmplrtDiv = 0x19;
inline constexpr std::uint8_t kConfig = 0x1A;
inline constexpr std::uint8_t kGyroConfig = 0x1B;
inline constexpr std::uint8_t kAccelConfig = 0x1C;
inline constexpr std::uint8_t kAccelXoutH = 0x3B;  // 0x3B..0x40 accel, 0x41..0x42 temp, 0x43..0x48 gyro
inline constexpr std::uint8_t kTempOutH = 0x41;
inline constexpr std::uint8_t kGyroXoutH = 0x43;
inline constexpr std::uint8_t kPwrMgmt1 = 0x6B;
inline constexpr std::uint8_t kPwrMgmt2 = 0x6C;
inline constexpr std::uint8_t kWhoAmI = 0x75;
inline constexpr std::uint8_t kWhoAmIValue = 0x68;
inline constexpr std::size_t kBurstLength = 14;
inline constexpr double kAccelLsbPerG = 4096.0;  // +-8 g
inline constexpr double kGyroLsbPerDps = 65.5;   // +-500 deg/s
inline constexpr double kTempLsbPerC = 340.0;
inline constexpr double kTempOffsetC = 36.53;
inline constexpr double kStandardGravity = 9.80665;
}  // namespace imu

RegisterMap make_imu_chip();

struct ImuSample {
  Vec3 accel = Vec3::Zero();  // m/s^2
  Vec3 gyro = Vec3::Zero();   // rad/s
  double temperature = 0.0;   // K
};

struct ImuRaw {
  std::array<std::int16_t, 3> accel;
  std::int16_t temp;
  std::array<std::int16_t, 3> gyro;
};

/// Quantizes and saturates to the 16-bit data registers.
ImuRaw quantize_imu(const Vec3& accel, const Vec3& gyro, double temperature);
std::array<std::uint8_t, imu::kBurstLength> pack_imu(const ImuRaw& raw);
/// Writes the 14-byte data block in one update.
void encode_imu(const Vec3& accel, const Vec3& gyro, double temperature, RegisterMap& map);
ImuSample decode_imu_burst(std::span<const std::uint8_t, imu::kBurstLength> bytes);

// --- Magnetometer: AK8963-style layout (little-endian data) --------------
namespace mag {
inline constexpr std::uint8_t kWia = 0x00;
inline constexpr std::uint8_t kWiaValue = 0x48;
inline constexpr std::uint8_t kSt1 = 0x02;
inline constexpr std::uint8_t kHxl = 0x03;  // 0x03..0x08 X, Y, Z little-endian
inline constexpr std::uint8_t kSt2 = 0x09;
inline constexpr std::uint8_t kCntl1 = 0x0A;
inline constexpr std::size_t kDataLength = 6;
inline constexpr double kMicroTeslaPerLsb = 0.15;
}  // namespace mag

RegisterMap make_mag_chip();
void encode_mag(const Vec3& field_ut, RegisterMap& map);
Vec3 decode_mag(std::span<const std::uint8_t, mag::kDataLength> bytes);

// --- Barometer: BMP280-style id, simplified compensated output ----------
namespace baro {
inline constexpr std::uint8_t kId = 0xD0;
inline constexpr std::uint8_t kIdValue = 0x58;
inline constexpr std::uint8_t kCtrlMeas = 0xF4;
inline constexpr std::uint8_t kConfig = 0xF5;
inline constexpr std::uint8_t kPressMsb = 0xF7;  // 0xF7..0xF9 pressure, 0xFA..0xFC temperature
inline constexpr std::size_t kDataLength = 6;
inline constexpr double kPressureLsbPerPa = 64.0;
inline constexpr double kTempLsbPerK = 100.0;
}  // namespace baro

RegisterMap make_baro_chip();
void encode_baro(double pressure_pa, double temperature_k, RegisterMap& map);
struct BaroSample {
  double pressure;     // Pa
  double temperature;  // K
};
BaroSample decode_baro(std::span<const std::uint8_t, baro::kDataLength> bytes);

// --- GPS frame ------------------------------------------------------------
namespace gps {
inline constexpr std::uint8_t kSync1 = 0xB5;
inline constexpr std::uint8_t kSync2 = 0x62;
inline constexpr std::uint8_t kClass = 0x01;
inline constexpr std::uint8_t kId = 0x07;
inline constexpr std::size_t kPayloadLength = 24;
inline constexpr std::size_t kFrameLength = 6 + kPayloadLength + 2;
}  // namespace gps

enum class GpsError : std::uint8_t { truncated, bad_sync, bad_length, bad_checksum, unknown_message };

std::string_view to_string(GpsError e);

using GpsFrame = std::array<std::uint8_t, gps::kFrameLength>;
using GpsDecode = std::variant<GpsFix, GpsError>;

/// 8-bit Fletcher over class, id, length and payload.
std::array<std::uint8_t, 2> fletcher8(std::span<const std::uint8_t> bytes);

GpsFrame encode_gps(const GpsFix& fix);
/// Decodes one frame starting at bytes[0]. Never throws on malformed input.
GpsDecode decode_gps(std::span<const std::uint8_t> bytes);

/// Byte-stream receiver that resynchronizes on the sync pair.
class GpsStreamParser {
 public:
  /// Appends bytes and returns every complete valid fix.
  std::vector<GpsFix> feed(std::span<const std::uint8_t> bytes);
  std::uint64_t errors() const { return errors_; }

 private:
  std::vector<std::uint8_t> buffer_;
  std::uint64_t errors_ = 0;
};

// --- PWM ------------------------------------------------------------------
inline constexpr std::uint16_t kPwmMin = 1000;
inline constexpr std::uint16_t kPwmMax = 2000;

struct PwmCommand {
  std::vector<std::uint16_t> pulse_us;
};

/// 1000 us -> 0, 2000 us -> 1, clamped.
double decode_pwm(double pulse_us);
std::vector<double> decode_pwm(const PwmCommand& cmd);
/// Throttle in [0, 1] (clamped) to a pulse rounded to the nearest microsecond.
std::uint16_t encode_pwm(double throttle);

}  // namespace uvsim::bus

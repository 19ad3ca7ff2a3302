// Copyright 2026 The PMCU Simulator Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace pmcu {

// Base class for all errors raised by the simulator itself (configuration
// mistakes, API misuse, host I/O failures). Faults committed by simulated
// firmware are not exceptions; they end the run with a CrashReport instead.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define PMCU_DEFINE_ERROR(Name)                 \
    struct Name : Error {                       \
        using Error::Error;                     \
    }

// Machine construction / configuration.
PMCU_DEFINE_ERROR(ConfigError);
PMCU_DEFINE_ERROR(ImageLayoutError);
PMCU_DEFINE_ERROR(ImageFormatError);

// Task management and scheduling.
PMCU_DEFINE_ERROR(StackExhausted);
PMCU_DEFINE_ERROR(NoTasks);
PMCU_DEFINE_ERROR(NotRunnable);
PMCU_DEFINE_ERROR(UnbalancedEnable);
PMCU_DEFINE_ERROR(TraceDisabled);

// Heap.
PMCU_DEFINE_ERROR(OutOfMemory);

// Peripherals.
PMCU_DEFINE_ERROR(UnboundSlot);
PMCU_DEFINE_ERROR(SlotInUse);
PMCU_DEFINE_ERROR(FrameTooLarge);
PMCU_DEFINE_ERROR(PeerMissing);
PMCU_DEFINE_ERROR(InterfaceUnavailable);
PMCU_DEFINE_ERROR(CaptureParseError);
PMCU_DEFINE_ERROR(MediumGeometryError);
PMCU_DEFINE_ERROR(BlockOutOfRange);
PMCU_DEFINE_ERROR(ShortWrite);

// Harness.
PMCU_DEFINE_ERROR(UnknownFirmware);
PMCU_DEFINE_ERROR(SourceExhausted);

#undef PMCU_DEFINE_ERROR

}  // namespace pmcu

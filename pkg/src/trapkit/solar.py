"""Sunrise/sunset times and the day/night operating schedule.

Uses the NOAA solar position equations (the ones behind the NOAA sunrise/
sunset calculator) at the standard refraction-corrected zenith of 90.833
degrees. Event times are refined by re-evaluating the equation of time and
declination at the first-pass estimate, which brings results within a couple
of minutes of the reference calculator everywhere outside the polar edge
cases.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from typing import Optional


class Polar(enum.Enum):
    NONE = "none"
    POLAR_DAY = "polar_day"
    POLAR_NIGHT = "polar_night"


class TrapMode(enum.Enum):
    DAYTIME = "daytime"
    NIGHTTIME = "nighttime"


@dataclass(frozen=True)
class GeoLocation:
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")


@dataclass(frozen=True)
class SolarEvents:
    """Sunrise/sunset for one UTC calendar date, or a polar flag instead."""

    sunrise: Optional[datetime]
    sunset: Optional[datetime]
    polar: Polar = Polar.NONE

    def __post_init__(self):
        if self.polar is Polar.NONE:
            if self.sunrise is None or self.sunset is None:
                raise ValueError("non-polar events must carry sunrise and sunset")
            if not self.sunrise < self.sunset:
                raise ValueError("sunrise must precede sunset")
        elif self.sunrise is not None or self.sunset is not None:
            raise ValueError("polar days carry no event times")


# refraction-corrected zenith for geometric sunrise/sunset
_ZENITH_DEG = 90.833


def _julian_day(d: date) -> float:
    # Gregorian ordinal -> Julian day at 00:00 UTC
    return d.toordinal() + 1721424.5


def _sun_geometry(jcent: float) -> tuple[float, float]:
    """Equation of time (minutes) and solar declination (degrees)."""
    t = jcent
    mean_long = (280.46646 + t * (36000.76983 + t * 0.0003032)) % 360.0
    mean_anom = 357.52911 + t * (35999.05029 - 0.0001537 * t)
    eccent = 0.016708634 - t * (0.000042037 + 0.0000001267 * t)
    mrad = math.radians(mean_anom)
    eq_center = (
        math.sin(mrad) * (1.914602 - t * (0.004817 + 0.000014 * t))
        + math.sin(2 * mrad) * (0.019993 - 0.000101 * t)
        + math.sin(3 * mrad) * 0.000289
    )
    true_long = mean_long + eq_center
    omega = 125.04 - 1934.136 * t
    app_long = true_long - 0.00569 - 0.00478 * math.sin(math.radians(omega))
    mean_obliq = 23.0 + (26.0 + (21.448 - t * (46.815 + t * (0.00059 - t * 0.001813))) / 60.0) / 60.0
    obliq = mean_obliq + 0.00256 * math.cos(math.radians(omega))
    decl = math.degrees(math.asin(math.sin(math.radians(obliq)) * math.sin(math.radians(app_long))))
    vary = math.tan(math.radians(obliq / 2.0)) ** 2
    lrad = math.radians(mean_long)
    eqtime = 4.0 * math.degrees(
        vary * math.sin(2 * lrad)
        - 2.0 * eccent * math.sin(mrad)
        + 4.0 * eccent * vary * math.sin(mrad) * math.cos(2 * lrad)
        - 0.5 * vary * vary * math.sin(4 * lrad)
        - 1.25 * eccent * eccent * math.sin(2 * mrad)
    )
    return eqtime, decl


def _hour_angle_cos(lat_deg: float, decl_deg: float) -> float:
    lat = math.radians(lat_deg)
    decl = math.radians(decl_deg)
    return (
        math.cos(math.radians(_ZENITH_DEG)) / (math.cos(lat) * math.cos(decl))
        - math.tan(lat) * math.tan(decl)
    )


def solar_events(loc: GeoLocation, day: date) -> SolarEvents:
    """Sunrise and sunset (UTC) for the given location and UTC calendar date.

    Polar day/night is reported through the ``polar`` flag instead of event
    times.
    """
    jd0 = _julian_day(day)

    def refine(minutes_utc: float, rising: bool) -> Optional[float]:
        # two refinement passes: evaluate the sun at the current estimate
        for _ in range(2):
            jcent = (jd0 + minutes_utc / 1440.0 - 2451545.0) / 36525.0
            eqtime, decl = _sun_geometry(jcent)
            cos_ha = _hour_angle_cos(loc.latitude, decl)
            if not -1.0 <= cos_ha <= 1.0:
                return None
            ha = math.degrees(math.acos(cos_ha))
            noon = 720.0 - 4.0 * loc.longitude - eqtime
            minutes_utc = noon - 4.0 * ha if rising else noon + 4.0 * ha
        return minutes_utc

    # first pass at local solar noon
    jcent_noon = (jd0 + (720.0 - 4.0 * loc.longitude) / 1440.0 - 2451545.0) / 36525.0
    _, decl_noon = _sun_geometry(jcent_noon)
    cos_ha_noon = _hour_angle_cos(loc.latitude, decl_noon)
    if cos_ha_noon > 1.0:
        return SolarEvents(None, None, Polar.POLAR_NIGHT)
    if cos_ha_noon < -1.0:
        return SolarEvents(None, None, Polar.POLAR_DAY)

    noon0 = 720.0 - 4.0 * loc.longitude
    ha0 = math.degrees(math.acos(cos_ha_noon))
    rise_min = refine(noon0 - 4.0 * ha0, rising=True)
    set_min = refine(noon0 + 4.0 * ha0, rising=False)
    if rise_min is None or set_min is None:
        # the refinement stepped across a polar transition; classify by noon sun
        return SolarEvents(None, None, Polar.POLAR_NIGHT if cos_ha_noon > 0 else Polar.POLAR_DAY)

    midnight = datetime(day.year, day.month, day.day, tzinfo=timezone.utc)
    sunrise = midnight + timedelta(minutes=rise_min)
    sunset = midnight + timedelta(minutes=set_min)
    return SolarEvents(sunrise, sunset, Polar.NONE)


def mode_at(loc: GeoLocation, t: datetime) -> TrapMode:
    """Operating mode at instant ``t``: daytime iff sunrise <= t < sunset.

    Events are computed for t's UTC calendar date; polar day/night pin the
    mode for the whole date.
    """
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    else:
        t = t.astimezone(timezone.utc)
    ev = solar_events(loc, t.date())
    if ev.polar is Polar.POLAR_DAY:
        return TrapMode.DAYTIME
    if ev.polar is Polar.POLAR_NIGHT:
        return TrapMode.NIGHTTIME
    return TrapMode.DAYTIME if ev.sunrise <= t < ev.sunset else TrapMode.NIGHTTIME

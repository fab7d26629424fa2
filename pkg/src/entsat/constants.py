"""Physical constants. Lengths in km, times in seconds, angles in radians."""

EARTH_RADIUS_KM = 6371.0
MU_EARTH_KM3_S2 = 3.986004418e5
SPEED_OF_LIGHT_KM_S = 299792.458
SECONDS_PER_YEAR = 365.25 * 86400.0

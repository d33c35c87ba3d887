#include "ovdst/multiwoz_schema.hpp"

namespace ovdst::multiwoz {

namespace {

using ET = EntityType;

SlotSchema slot(std::string name, ET type, std::string description) {
    return SlotSchema{std::move(name), std::move(description), type, {}, true};
}

} // namespace

Schema builtin_schema() {
    Schema s;
    s.add_domain("restaurant", {
        slot("name", ET::Name, "name of the restaurant"),
        slot("book-day", ET::Day, "day of the restaurant booking"),
        slot("book-time", ET::Time, "time of the restaurant booking"),
        slot("area", ET::Location, "area or place of the restaurant"),
        slot("address", ET::Location, "exact location of the restaurant"),
        slot("book-people-count", ET::Number, "number of people for the restaurant booking"),
        slot("phone", ET::Number, "restaurant phone number"),
        slot("food", ET::Type, "the cuisine of the restaurant you are looking for"),
        slot("price-range", ET::Range, "price budget for the restaurant"),
        slot("post-code", ET::Code, "postal code of the restaurant"),
        slot("reference-code", ET::Code, "reference number of the restaurant booking"),
    });
    s.add_domain("attraction", {
        slot("name", ET::Name, "name of the attraction"),
        slot("open-hours", ET::Time, "opening hours of the attraction"),
        slot("area", ET::Location, "area to search for attractions"),
        slot("address", ET::Location, "address of the attraction"),
        slot("phone", ET::Number, "phone number of the attraction"),
        slot("entrance-fee", ET::Price, "how much is the entrance fee"),
        slot("type", ET::Type, "type of the attraction"),
        slot("post-code", ET::Code, "postal code of the attraction"),
    });
    s.add_domain("hotel", {
        slot("name", ET::Name, "name of the hotel"),
        slot("book-day", ET::Day, "day of the hotel booking"),
        slot("area", ET::Location, "area or place of the hotel"),
        slot("address", ET::Location, "address of the hotel"),
        slot("book-people", ET::Number, "number of people for the hotel booking"),
        slot("book-stay", ET::Number, "length of stay at the hotel"),
        slot("phone", ET::Number, "phone number of the hotel"),
        slot("stars", ET::Number, "star rating of the hotel"),
        slot("type", ET::Type, "what is the type of the hotel"),
        slot("price-range", ET::Range, "price budget of the hotel"),
        slot("post-code", ET::Code, "postal code of the hotel"),
        slot("reference-code", ET::Code, "reference number of the hotel booking"),
        slot("parking", ET::Boolean, "whether the hotel has parking"),
        slot("internet", ET::Boolean, "whether the hotel has internet"),
    });
    s.add_domain("taxi", {
        slot("destination", ET::Name, "destination of taxi"),
        slot("departure", ET::Name, "departure location of taxi"),
        slot("leave-at", ET::Time, "leaving time of taxi"),
        slot("arrive-by", ET::Time, "arrival time of taxi"),
        slot("phone", ET::Number, "phone number of the taxi"),
        slot("type", ET::Type, "car type of the taxi"),
    });
    s.add_domain("train", {
        slot("train-id", ET::Name, "id of the train"),
        slot("day", ET::Day, "day of the train"),
        slot("leave-at", ET::Time, "leaving time for the train"),
        slot("arrive-by", ET::Time, "arrival time of the train"),
        slot("destination", ET::Location, "destination of the train"),
        slot("departure", ET::Location, "departure location of the train"),
        slot("duration", ET::Number, "duration of the travel"),
        slot("book-people-count", ET::Number, "how many train tickets you need"),
        slot("price", ET::Price, "the price of the train ticket"),
        slot("reference-code", ET::Code, "reference number of the train booking"),
    });
    s.add_domain("bus", {
        slot("day", ET::Day, "day of the bus"),
        slot("leave-at", ET::Time, "leaving time of bus"),
        slot("destination", ET::Location, "destination of bus"),
        slot("departure", ET::Location, "departure location of bus"),
    });
    // post-code is annotated in the dataset but absent from the entity/slot
    // table, so QA matching never targets it.
    SlotSchema hospital_post_code = slot("post-code", ET::Code, "postal code of the hospital");
    hospital_post_code.matchable = false;
    s.add_domain("hospital", {
        slot("department", ET::Name, "type of medical care"),
        slot("address", ET::Location, "address of the hospital"),
        slot("phone", ET::Number, "phone number of the hospital"),
        hospital_post_code,
    });
    s.add_domain("police", {
        slot("name", ET::Name, "name of the police station"),
        slot("address", ET::Location, "address of the police station"),
        slot("phone", ET::Number, "phone number of the police station"),
        slot("post-code", ET::Code, "postal code of the police station"),
    });
    return s;
}

const std::vector<std::pair<EntityType, std::vector<std::string>>>& entity_slot_table() {
    static const std::vector<std::pair<EntityType, std::vector<std::string>>> table = {
        {ET::Name, {"restaurant.name", "attraction.name", "hotel.name", "taxi.destination",
                    "taxi.departure", "train.train-id", "hospital.department", "police.name"}},
        {ET::Day, {"restaurant.book-day", "hotel.book-day", "train.day", "bus.day"}},
        {ET::Time, {"restaurant.book-time", "attraction.open-hours", "taxi.leave-at", "taxi.arrive-by",
                    "train.leave-at", "train.arrive-by", "bus.leave-at"}},
        {ET::Location, {"restaurant.area", "restaurant.address", "attraction.area", "attraction.address",
                        "hotel.area", "hotel.address", "train.destination", "train.departure",
                        "bus.destination", "bus.departure", "hospital.address", "police.address"}},
        {ET::Number, {"restaurant.book-people-count", "restaurant.phone", "hotel.book-people",
                      "hotel.book-stay", "hotel.phone", "hotel.stars", "train.duration",
                      "train.book-people-count", "taxi.phone", "attraction.phone",
                      "hospital.phone", "police.phone"}},
        {ET::Price, {"attraction.entrance-fee", "train.price"}},
        {ET::Type, {"restaurant.food", "attraction.type", "hotel.type", "taxi.type"}},
        {ET::Range, {"restaurant.price-range", "hotel.price-range"}},
        {ET::Code, {"restaurant.post-code", "restaurant.reference-code", "attraction.post-code",
                    "hotel.post-code", "hotel.reference-code", "train.reference-code", "police.post-code"}},
        {ET::Boolean, {"hotel.parking", "hotel.internet"}},
    };
    return table;
}

} // namespace ovdst::multiwoz
